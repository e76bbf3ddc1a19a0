#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stgraph/util.hpp"

namespace stg {

// Interleaved 8-bit RGB, row-major from the top-left.
struct RgbImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // 3 bytes per pixel

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
        for (std::size_t i = 0; i + 2 < pixels.size(); i += 3) {
            pixels[i] = r;
            pixels[i + 1] = g;
            pixels[i + 2] = b;
        }
    }

    std::uint8_t* at(int u, int v) {
        return &pixels[(static_cast<std::size_t>(v) * width + u) * 3];
    }
    const std::uint8_t* at(int u, int v) const {
        return &pixels[(static_cast<std::size_t>(v) * width + u) * 3];
    }
    void set(int u, int v, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = at(u, v);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }
};

// Uncompressed 24-bit BMP. Picked because it needs no compression library and
// every image viewer and vision endpoint accepts it.
inline std::vector<std::uint8_t> encode_bmp(const RgbImage& img) {
    int row_bytes = img.width * 3;
    int pad = (4 - row_bytes % 4) % 4;
    std::uint32_t data_size = static_cast<std::uint32_t>((row_bytes + pad) * img.height);
    std::uint32_t file_size = 54 + data_size;

    std::vector<std::uint8_t> out;
    out.reserve(file_size);
    auto put16 = [&out](std::uint16_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
    };
    auto put32 = [&out](std::uint32_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
        out.push_back((v >> 16) & 0xff);
        out.push_back((v >> 24) & 0xff);
    };
    out.push_back('B');
    out.push_back('M');
    put32(file_size);
    put32(0);
    put32(54);          // pixel data offset
    put32(40);          // BITMAPINFOHEADER
    put32(static_cast<std::uint32_t>(img.width));
    put32(static_cast<std::uint32_t>(img.height));
    put16(1);           // planes
    put16(24);          // bpp
    put32(0);           // no compression
    put32(data_size);
    put32(2835);        // 72 dpi
    put32(2835);
    put32(0);
    put32(0);
    // rows bottom-up, BGR
    for (int v = img.height - 1; v >= 0; --v) {
        for (int u = 0; u < img.width; ++u) {
            const std::uint8_t* p = img.at(u, v);
            out.push_back(p[2]);
            out.push_back(p[1]);
            out.push_back(p[0]);
        }
        for (int i = 0; i < pad; ++i) out.push_back(0);
    }
    return out;
}

inline std::string to_data_uri(const RgbImage& img) {
    return "data:image/bmp;base64," + base64_encode(encode_bmp(img));
}

namespace detail {

// 3x5 glyphs, 15 bits row-major from the top-left. Enough coverage for object
// ids (lowercase, digits, separators).
inline std::uint16_t glyph_bits(char c) {
    switch (c) {
        case '0': return 0b111101101101111;
        case '1': return 0b010110010010111;
        case '2': return 0b111001111100111;
        case '3': return 0b111001111001111;
        case '4': return 0b101101111001001;
        case '5': return 0b111100111001111;
        case '6': return 0b111100111101111;
        case '7': return 0b111001001010010;
        case '8': return 0b111101111101111;
        case '9': return 0b111101111001111;
        case 'a': return 0b010101111101101;
        case 'b': return 0b110101110101110;
        case 'c': return 0b011100100100011;
        case 'd': return 0b110101101101110;
        case 'e': return 0b111100110100111;
        case 'f': return 0b111100110100100;
        case 'g': return 0b011100101101011;
        case 'h': return 0b101101111101101;
        case 'i': return 0b111010010010111;
        case 'j': return 0b001001001101010;
        case 'k': return 0b101110100110101;
        case 'l': return 0b100100100100111;
        case 'm': return 0b101111111101101;
        case 'n': return 0b110101101101101;
        case 'o': return 0b010101101101010;
        case 'p': return 0b110101110100100;
        case 'q': return 0b010101101011001;
        case 'r': return 0b110101110110101;
        case 's': return 0b011100010001110;
        case 't': return 0b111010010010010;
        case 'u': return 0b101101101101111;
        case 'v': return 0b101101101101010;
        case 'w': return 0b101101111111101;
        case 'x': return 0b101101010101101;
        case 'y': return 0b101101010010010;
        case 'z': return 0b111001010100111;
        case '_': return 0b000000000000111;
        case '-': return 0b000000111000000;
        case '#': return 0b101111101111101;
        case '.': return 0b000000000000010;
        case ':': return 0b000010000010000;
        default:  return 0;  // unknown chars render as space
    }
}

}  // namespace detail

// Draws `text` in a white box with a black border, top-left corner at (x, y),
// clipped to the image. Returns the box width in pixels.
inline int draw_label(RgbImage& img, int x, int y, const std::string& text) {
    int box_w = static_cast<int>(text.size()) * 4 + 3;
    int box_h = 9;
    for (int dv = 0; dv < box_h; ++dv) {
        for (int du = 0; du < box_w; ++du) {
            int u = x + du, v = y + dv;
            if (u < 0 || v < 0 || u >= img.width || v >= img.height) continue;
            bool border = dv == 0 || dv == box_h - 1 || du == 0 || du == box_w - 1;
            if (border) {
                img.set(u, v, 0, 0, 0);
            } else {
                img.set(u, v, 255, 255, 255);
            }
        }
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        std::uint16_t bits = detail::glyph_bits(text[i]);
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 3; ++c) {
                if (!(bits & (1 << (14 - (r * 3 + c))))) continue;
                int u = x + 2 + static_cast<int>(i) * 4 + c;
                int v = y + 2 + r;
                if (u < 0 || v < 0 || u >= img.width || v >= img.height) continue;
                img.set(u, v, 0, 0, 0);
            }
        }
    }
    return box_w;
}

}  // namespace stg
