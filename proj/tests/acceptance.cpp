// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdio>
#include <exception>
#include <string>

#include "criteria.hpp"

int main(int argc, char** argv) {
    using namespace rotdrag::testing;
    const std::string only = argc > 1 ? argv[1] : "";
    int failures = 0;
    for (const Criterion& c : acceptance_criteria()) {
        if (!only.empty() && c.name.find(only) == std::string::npos)
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        CriterionResult r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, std::string("threw: ") + e.what()};
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool pass = r.pass;
        std::string detail = r.detail;
        if (c.budget_seconds > 0 && r.seconds > c.budget_seconds) {
            pass = false;
            detail += "; over the " + std::to_string(static_cast<int>(c.budget_seconds)) + " s budget";
        }
        std::printf("[%s] %s (%.2f s): %s\n", pass ? "PASS" : "FAIL", c.name.c_str(), r.seconds, detail.c_str());
        std::fflush(stdout);
        failures += pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
