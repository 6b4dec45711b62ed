#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

// 8-bit raster image, 1 (gray) or 3 (rgb) channels, interleaved row-major.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int h, int w, int c)
        : height(h), width(w), channels(c),
          pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), 0) {}

    std::uint8_t& at(int y, int x, int c = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

namespace detail {

// PNM token reader: skips whitespace and '#' comments.
inline std::string pnm_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') break;
        tok.push_back(c);
        ++pos;
    }
    if (tok.empty()) throw FormatError("pgm: truncated header");
    return tok;
}

inline int pnm_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    const std::string tok = pnm_token(bytes, pos);
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw FormatError("pgm: non-numeric header field '" + tok + "'");
    return std::stoi(tok);
}

} // namespace detail

// Binary PGM (P5), maxval 255 only.
inline ImageU8 read_pgm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    if (detail::pnm_token(bytes, pos) != "P5")
        throw FormatError("pgm: expected binary P5");
    const int w = detail::pnm_int(bytes, pos);
    const int h = detail::pnm_int(bytes, pos);
    const int maxval = detail::pnm_int(bytes, pos);
    if (maxval != 255)
        throw FormatError("pgm: maxval must be 255");
    if (w <= 0 || h <= 0)
        throw FormatError("pgm: non-positive dimensions");
    ++pos; // single whitespace byte before the raster
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() < pos + need)
        throw TruncatedPayload("pgm: raster shorter than header promises");
    ImageU8 img(h, w, 1);
    std::copy(bytes.begin() + pos, bytes.begin() + pos + need, img.pixels.begin());
    return img;
}

// Binary PPM (P6). Gray input is replicated across the three channels.
inline std::vector<std::uint8_t> write_ppm(const ImageU8& img) {
    const std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + static_cast<std::size_t>(img.height) * img.width * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.channels == 3) {
                out.push_back(img.at(y, x, 0));
                out.push_back(img.at(y, x, 1));
                out.push_back(img.at(y, x, 2));
            } else {
                const std::uint8_t v = img.at(y, x, 0);
                out.push_back(v);
                out.push_back(v);
                out.push_back(v);
            }
        }
    }
    return out;
}

// Gray image -> [0,1] tensor of shape [H, W].
inline Tensor normalize_gray(const ImageU8& img) {
    if (img.channels != 1) throw ShapeError("normalize_gray: expected 1-channel image");
    Tensor t({static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        t[i] = img.pixels[i] / 255.0;
    return t;
}

} // namespace supercl
