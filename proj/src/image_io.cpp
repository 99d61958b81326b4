// Copyright (C) 2026 The rotdrag Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotdrag/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "rotdrag/error.hpp"

namespace rotdrag {
namespace {

bool is_png(std::span<const std::uint8_t> b) {
    static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool is_jpeg(std::span<const std::uint8_t> b) {
    return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff;
}

// Decodes to interleaved 8-bit samples with `channels` components (1 or 3).
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

Raster decode_png(std::span<const std::uint8_t> bytes, int channels) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw Error(ErrorCode::Decode, std::string("png: ") + img.message);
    img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Raster r{static_cast<int>(img.width), static_cast<int>(img.height), channels, {}};
    r.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw Error(ErrorCode::Decode, "png: " + msg);
    }
    return r;
}

struct JpegErr {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Corrupt-data warnings (truncation, bad Huffman codes) would otherwise yield a gray-filled image.
void jpeg_warn(j_common_ptr cinfo, int level) {
    if (level < 0)
        jpeg_fail(cinfo);
}

Raster decode_jpeg(std::span<const std::uint8_t> bytes, int channels) {
    jpeg_decompress_struct cinfo{};
    JpegErr err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_fail;
    err.base.emit_message = jpeg_warn;
    Raster r;
    // Nothing with a destructor may be constructed between setjmp and the last libjpeg call.
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(ErrorCode::Decode, std::string("jpeg: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    r.width = static_cast<int>(cinfo.output_width);
    r.height = static_cast<int>(cinfo.output_height);
    r.channels = channels;
    r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = r.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * r.width * channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return r;
}

Raster decode_raster(std::span<const std::uint8_t> bytes, int channels) {
    if (is_png(bytes)) return decode_png(bytes, channels);
    if (is_jpeg(bytes)) return decode_jpeg(bytes, channels);
    throw Error(ErrorCode::Decode, "not a PNG or JPEG stream");
}

Bytes encode_raster(const Raster& r) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(r.width);
    img.height = static_cast<png_uint_32>(r.height);
    img.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, r.pixels.data(), 0, nullptr))
        throw Error(ErrorCode::Io, std::string("png encode: ") + img.message);
    Bytes out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, r.pixels.data(), 0, nullptr))
        throw Error(ErrorCode::Io, std::string("png encode: ") + img.message);
    out.resize(size);
    return out;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
    const Raster r = decode_raster(bytes, 3);
    if (r.width == 0 || r.height == 0) throw Error(ErrorCode::Decode, "empty image");
    Image img(3, r.height, r.width);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = r.pixels[(static_cast<std::size_t>(y) * r.width + x) * 3 + c] / 255.0;
    return img;
}

BinaryMask decode_mask(std::span<const std::uint8_t> bytes) {
    const Raster r = decode_raster(bytes, 1);
    BinaryMask m(r.width, r.height);
    for (std::size_t i = 0; i < r.pixels.size(); ++i) m.bits[i] = r.pixels[i] != 0;
    return m;
}

Bytes encode_png(const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        throw Error(ErrorCode::InvalidArgument, "png encode needs 1 or 3 channels");
    Raster r{image.width, image.height, image.channels, {}};
    r.pixels.resize(image.size());
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                r.pixels[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return encode_raster(r);
}

Bytes encode_mask_png(const BinaryMask& mask) {
    Raster r{mask.width, mask.height, 1, {}};
    r.pixels.resize(mask.bits.size());
    for (std::size_t i = 0; i < mask.bits.size(); ++i) r.pixels[i] = mask.bits[i] ? 255 : 0;
    return encode_raster(r);
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

Image read_image(const std::filesystem::path& path) {
    const Bytes b = read_file(path);
    try {
        return decode_image(b);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

BinaryMask read_mask(const std::filesystem::path& path) {
    const Bytes b = read_file(path);
    try {
        return decode_mask(b);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

void write_png(const std::filesystem::path& path, const Image& image) { write_file(path, encode_png(image)); }

bool is_image_file(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace rotdrag
