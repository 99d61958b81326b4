// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rotdrag {

enum class ErrorCode {
    InvalidArgument,
    ShapeMismatch,
    OutOfBounds,
    DegenerateAxis,
    EmptyMaskLine,
    PointAtInfinity,
    DenoiserFailure,
    AllHandlesConverged,
    NonFiniteLoss,
    UnsatisfiableCrop,
    DegenerateConfiguration,
    EmptyBenchmark,
    Io,
    Config,
    Unavailable,
    Decode,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), m_code(code) {}

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

}  // namespace rotdrag
