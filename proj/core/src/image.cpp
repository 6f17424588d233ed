#include "debias/image.hpp"

#include "debias/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

namespace debias {

namespace {

std::size_t read_header_value(std::istream& in, const std::filesystem::path& path) {
    // Skips whitespace and '#' comments between header fields.
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string ignored;
            std::getline(in, ignored);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    long long value = -1;
    if (!(in >> value) || value <= 0) {
        throw Error("malformed image header in " + path.string());
    }
    return static_cast<std::size_t>(value);
}

int to_level(double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

// Reflect-101 index into [0, n).
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto len = static_cast<std::ptrdiff_t>(n);
    if (len == 1) {
        return 0;
    }
    const auto period = 2 * (len - 1);
    i %= period;
    if (i < 0) {
        i += period;
    }
    return static_cast<std::size_t>(i < len ? i : period - i);
}

using Lut = std::array<double, kHistogramBins>;

Lut tile_mapping(const std::vector<int>& levels, std::size_t stride, std::size_t y0, std::size_t x0,
                 std::size_t th, std::size_t tw, double clip_limit) {
    std::array<double, kHistogramBins> hist{};
    for (std::size_t y = y0; y < y0 + th; ++y) {
        for (std::size_t x = x0; x < x0 + tw; ++x) {
            hist[static_cast<std::size_t>(levels[y * stride + x])] += 1.0;
        }
    }
    const double area = static_cast<double>(th * tw);
    const double limit = clip_limit * area / static_cast<double>(kHistogramBins);
    double excess = 0.0;
    for (auto& h : hist) {
        if (h > limit) {
            excess += h - limit;
            h = limit;
        }
    }
    const double bonus = excess / static_cast<double>(kHistogramBins);
    Lut lut{};
    double cdf = 0.0;
    for (std::size_t v = 0; v < kHistogramBins; ++v) {
        cdf += hist[v] + bonus;
        lut[v] = cdf * 255.0 / area;
    }
    return lut;
}

} // namespace

Tensor read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read image " + path.string());
    }
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    std::size_t channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw Error("unsupported image format in " + path.string() + " (expected P5 or P6)");
    }
    const auto width = read_header_value(in, path);
    const auto height = read_header_value(in, path);
    const auto maxval = read_header_value(in, path);
    if (maxval != 255) {
        throw Error("unsupported maxval " + std::to_string(maxval) + " in " + path.string());
    }
    in.get();
    std::vector<unsigned char> raw(channels * width * height);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw Error("truncated image data in " + path.string());
    }
    Tensor out({channels, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                out.at(c, y, x) = raw[(y * width + x) * channels + c] / 255.0;
            }
        }
    }
    return out;
}

void write_pnm(const std::filesystem::path& path, const Tensor& image) {
    Tensor img = image.rank() == 2 ? image.reshaped({1, image.dim(0), image.dim(1)}) : image;
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
        throw Error("write_pnm expects 1 or 3 channels, got " + shape_string(image.shape()));
    }
    const auto channels = img.dim(0);
    const auto height = img.dim(1);
    const auto width = img.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write image " + path.string());
    }
    out << (channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> raw(channels * width * height);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                raw[(y * width + x) * channels + c] = static_cast<unsigned char>(to_level(img.at(c, y, x)));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) {
        throw Error("failed writing image " + path.string());
    }
}

Tensor clahe(const Tensor& image, const ClaheConfig& cfg) {
    if (image.rank() != 2) {
        throw Error("clahe expects an HxW image, got " + shape_string(image.shape()));
    }
    if (!(cfg.clip_limit > 0.0)) {
        throw Error("clahe clip_limit must be positive");
    }
    if (cfg.tiles_x == 0 || cfg.tiles_y == 0) {
        throw Error("clahe tile counts must be positive");
    }
    const auto height = image.dim(0);
    const auto width = image.dim(1);
    const auto ty = cfg.tiles_y;
    const auto tx = cfg.tiles_x;
    const auto th = (height + ty - 1) / ty;
    const auto tw = (width + tx - 1) / tx;
    const auto padded_h = th * ty;
    const auto padded_w = tw * tx;

    std::vector<int> levels(padded_h * padded_w);
    for (std::size_t y = 0; y < padded_h; ++y) {
        for (std::size_t x = 0; x < padded_w; ++x) {
            levels[y * padded_w + x] = to_level(image.at(reflect(static_cast<std::ptrdiff_t>(y), height),
                                                         reflect(static_cast<std::ptrdiff_t>(x), width)));
        }
    }

    std::vector<Lut> luts(ty * tx);
    for (std::size_t r = 0; r < ty; ++r) {
        for (std::size_t c = 0; c < tx; ++c) {
            luts[r * tx + c] = tile_mapping(levels, padded_w, r * th, c * tw, th, tw, cfg.clip_limit);
        }
    }

    // Bilinear blend of the four nearest tile mappings, measured between tile
    // centres; pixels outside the outermost centres clamp to the edge tile.
    Tensor out({height, width});
    for (std::size_t y = 0; y < height; ++y) {
        const double gy = std::clamp((static_cast<double>(y) + 0.5) / static_cast<double>(th) - 0.5, 0.0,
                                     static_cast<double>(ty - 1));
        const auto r0 = static_cast<std::size_t>(gy);
        const auto r1 = std::min(r0 + 1, ty - 1);
        const double wy = gy - static_cast<double>(r0);
        for (std::size_t x = 0; x < width; ++x) {
            const double gx = std::clamp((static_cast<double>(x) + 0.5) / static_cast<double>(tw) - 0.5, 0.0,
                                         static_cast<double>(tx - 1));
            const auto c0 = static_cast<std::size_t>(gx);
            const auto c1 = std::min(c0 + 1, tx - 1);
            const double wx = gx - static_cast<double>(c0);
            const auto v = static_cast<std::size_t>(levels[y * padded_w + x]);
            const double top = (1.0 - wx) * luts[r0 * tx + c0][v] + wx * luts[r0 * tx + c1][v];
            const double bottom = (1.0 - wx) * luts[r1 * tx + c0][v] + wx * luts[r1 * tx + c1][v];
            const double mapped = (1.0 - wy) * top + wy * bottom;
            out.at(y, x) = static_cast<double>(std::clamp(std::lround(mapped), 0L, 255L)) / 255.0;
        }
    }
    return out;
}

Tensor clahe_image(const Tensor& image, const ClaheConfig& cfg) {
    if (image.rank() != 3) {
        throw Error("clahe_image expects CxHxW, got " + shape_string(image.shape()));
    }
    const auto height = image.dim(1);
    const auto width = image.dim(2);
    if (image.dim(0) == 1) {
        return clahe(image.slice(0), cfg).reshaped({1, height, width});
    }
    if (image.dim(0) != 3) {
        throw Error("clahe_image supports 1 or 3 channels, got " + std::to_string(image.dim(0)));
    }
    Tensor luma({height, width});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            luma.at(y, x) = 0.299 * image.at(0, y, x) + 0.587 * image.at(1, y, x) + 0.114 * image.at(2, y, x);
        }
    }
    const Tensor equalized = clahe(luma, cfg);
    Tensor out = image;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                out.at(c, y, x) = std::clamp(image.at(c, y, x) + equalized.at(y, x) - luma.at(y, x), 0.0, 1.0);
            }
        }
    }
    return out;
}

Tensor flip_horizontal(const Tensor& image) {
    Tensor out(image.shape());
    const auto width = image.dim(2);
    for (std::size_t c = 0; c < image.dim(0); ++c) {
        for (std::size_t y = 0; y < image.dim(1); ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                out.at(c, y, x) = image.at(c, y, width - 1 - x);
            }
        }
    }
    return out;
}

Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& cfg) {
    if (image.rank() != 3) {
        throw Error("augment expects CxHxW, got " + shape_string(image.shape()));
    }
    if (cfg.flip_probability < 0.0 || cfg.rotation_degrees < 0.0 || cfg.translation_pixels < 0.0) {
        throw Error("augmentation ranges must be non-negative");
    }
    // Always consume the same number of draws so streams stay aligned across configs.
    const bool flip = rng.bernoulli(cfg.flip_probability);
    const double angle = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees) * std::numbers::pi / 180.0;
    const double shift_x = rng.uniform(-cfg.translation_pixels, cfg.translation_pixels);
    const double shift_y = rng.uniform(-cfg.translation_pixels, cfg.translation_pixels);

    Tensor src = flip ? flip_horizontal(image) : image;
    if (cfg.rotation_degrees == 0.0 && cfg.translation_pixels == 0.0) {
        return src;
    }
    const auto height = image.dim(1);
    const auto width = image.dim(2);
    const double cy = (static_cast<double>(height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(width) - 1.0) / 2.0;
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    Tensor out(image.shape());
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            // Inverse map: destination -> source.
            const double dx = static_cast<double>(x) - cx - shift_x;
            const double dy = static_cast<double>(y) - cy - shift_y;
            const double sx = std::round(cos_a * dx + sin_a * dy + cx);
            const double sy = std::round(-sin_a * dx + cos_a * dy + cy);
            if (sx < 0.0 || sy < 0.0 || sx >= static_cast<double>(width) || sy >= static_cast<double>(height)) {
                continue;
            }
            for (std::size_t c = 0; c < image.dim(0); ++c) {
                out.at(c, y, x) = src.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
        }
    }
    return out;
}

} // namespace debias
