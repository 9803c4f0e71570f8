#include "ncssd/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace ncssd {

namespace {

constexpr float kFloMagic = 202021.25f;

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw LoadError("cannot open '" + path + "'");
    const std::streamsize n = in.tellg();
    in.seekg(0);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(buf.data()), n);
    if (!in) throw LoadError("read failed for '" + path + "'");
    return buf;
}

struct Rgb8 {
    int64_t width = 0, height = 0;
    std::vector<uint8_t> pixels;  // packed RGB rows
};

Rgb8 decode_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw LoadError("cannot open '" + path + "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("PNG decode failed for '" + path + "'");
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    Rgb8 img;
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<size_t>(img.width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw LoadError("PNG '" + path + "' did not expand to 8-bit RGB");
    }
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int64_t y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = img.pixels.data() + y * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

Rgb8 decode_ppm(const std::vector<uint8_t>& buf, const std::string& path) {
    size_t pos = 2;  // past "P6"
    auto skip_space = [&] {
        while (pos < buf.size()) {
            if (std::isspace(buf[pos])) {
                ++pos;
            } else if (buf[pos] == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> int64_t {
        skip_space();
        int64_t v = 0;
        bool any = false;
        while (pos < buf.size() && std::isdigit(buf[pos])) {
            v = v * 10 + (buf[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw LoadError("malformed PPM header in '" + path + "'");
        return v;
    };
    Rgb8 img;
    img.width = read_int();
    img.height = read_int();
    const int64_t maxval = read_int();
    if (maxval != 255) throw LoadError("PPM '" + path + "' must be 8-bit (maxval 255)");
    ++pos;  // single whitespace after maxval
    const size_t need = static_cast<size_t>(img.width) * img.height * 3;
    if (buf.size() - pos < need) throw LoadError("truncated PPM '" + path + "'");
    img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                      buf.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

Rgb8 decode_any(const std::string& path) {
    std::vector<uint8_t> head = read_file(path);
    if (head.size() >= 2 && head[0] == 'P' && head[1] == '6') return decode_ppm(head, path);
    if (head.size() >= 4 && head[0] == 0x89 && head[1] == 'P' && head[2] == 'N' && head[3] == 'G')
        return decode_png(path);
    throw LoadError("'" + path + "' is neither PNG nor binary PPM");
}

void hsv_to_rgb(float h, float s, float v, uint8_t* out) {
    const float c = v * s;
    const float hp = h * 6.0f;
    const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
    float r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const float m = v - c;
    out[0] = static_cast<uint8_t>(std::lround(std::clamp((r + m) * 255.0f, 0.0f, 255.0f)));
    out[1] = static_cast<uint8_t>(std::lround(std::clamp((g + m) * 255.0f, 0.0f, 255.0f)));
    out[2] = static_cast<uint8_t>(std::lround(std::clamp((b + m) * 255.0f, 0.0f, 255.0f)));
}

}  // namespace

Tensor<float> read_image(const std::string& path) {
    Rgb8 img = decode_any(path);
    Tensor<float> out({3, img.height, img.width});
    const int64_t hw = img.height * img.width;
    for (int64_t p = 0; p < hw; ++p)
        for (int64_t c = 0; c < 3; ++c)
            out.data()[c * hw + p] = 2.0f * float(img.pixels[size_t(p * 3 + c)]) / 255.0f - 1.0f;
    return out;
}

Tensor<float> read_mask(const std::string& path) {
    Rgb8 img = decode_any(path);
    Tensor<float> out({1, img.height, img.width});
    const int64_t hw = img.height * img.width;
    for (int64_t p = 0; p < hw; ++p) {
        const bool on = img.pixels[size_t(p * 3)] || img.pixels[size_t(p * 3 + 1)] ||
                        img.pixels[size_t(p * 3 + 2)];
        out.data()[p] = on ? 1.0f : 0.0f;
    }
    return out;
}

void write_flow_flo(const std::string& path, const Tensor<float>& flow) {
    if (flow.rank() != 3 || flow.extent(0) != 2)
        throw DimensionError("flow field must be [2,H,W], got " + shape_str(flow.shape()));
    const int32_t h = static_cast<int32_t>(flow.extent(1));
    const int32_t w = static_cast<int32_t>(flow.extent(2));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(&kFloMagic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    const int64_t hw = int64_t(h) * w;
    for (int64_t p = 0; p < hw; ++p) {
        const float uv[2] = {flow.data()[p], flow.data()[hw + p]};
        out.write(reinterpret_cast<const char*>(uv), 8);
    }
    if (!out) throw LoadError("write failed for '" + path + "'");
}

Tensor<float> read_flow_flo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path + "'");
    float magic = 0;
    int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || magic != kFloMagic)
        throw LoadError("bad .flo magic in '" + path + "'");
    if (w < 1 || h < 1)
        throw LoadError("bad .flo dimensions " + std::to_string(w) + "x" + std::to_string(h) +
                        " in '" + path + "'");
    Tensor<float> flow({2, h, w});
    const int64_t hw = int64_t(h) * w;
    for (int64_t p = 0; p < hw; ++p) {
        float uv[2];
        in.read(reinterpret_cast<char*>(uv), 8);
        if (!in) throw LoadError("truncated .flo '" + path + "'");
        flow.data()[p] = uv[0];
        flow.data()[hw + p] = uv[1];
    }
    return flow;
}

void write_disparity_pfm(const std::string& path, const Tensor<float>& disparity) {
    if (disparity.rank() != 3 || disparity.extent(0) != 1)
        throw DimensionError("disparity map must be [1,H,W], got " + shape_str(disparity.shape()));
    const int64_t h = disparity.extent(1), w = disparity.extent(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open '" + path + "' for writing");
    out << "Pf\n" << w << " " << h << "\n-1.0\n";
    for (int64_t y = h - 1; y >= 0; --y)  // bottom-to-top
        out.write(reinterpret_cast<const char*>(disparity.data() + y * w),
                  static_cast<std::streamsize>(w * 4));
    if (!out) throw LoadError("write failed for '" + path + "'");
}

Tensor<float> read_disparity_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path + "'");
    std::string tag;
    in >> tag;
    if (tag != "Pf") throw LoadError("'" + path + "' is not a grayscale PFM (header '" + tag + "')");
    int64_t w = 0, h = 0;
    double scale = 0;
    in >> w >> h >> scale;
    if (!in || w < 1 || h < 1) throw LoadError("bad PFM header in '" + path + "'");
    if (scale >= 0) throw LoadError("big-endian PFM not supported ('" + path + "')");
    in.get();  // single newline before the raster
    Tensor<float> disp({1, h, w});
    for (int64_t y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(disp.data() + y * w), static_cast<std::streamsize>(w * 4));
        if (!in) throw LoadError("truncated PFM '" + path + "'");
    }
    return disp;
}

void write_image_png(const std::string& path, const uint8_t* rgb, int64_t width, int64_t height) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw LoadError("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw LoadError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw LoadError("PNG encode failed for '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (int64_t y = 0; y < height; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(rgb + y * width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void write_flow_visualization(const std::string& path, const Tensor<float>& flow) {
    if (flow.rank() != 3 || flow.extent(0) != 2)
        throw DimensionError("flow field must be [2,H,W]");
    const int64_t h = flow.extent(1), w = flow.extent(2), hw = h * w;
    float maxmag = 1e-6f;
    for (int64_t p = 0; p < hw; ++p) {
        const float u = flow.data()[p], v = flow.data()[hw + p];
        maxmag = std::max(maxmag, std::sqrt(u * u + v * v));
    }
    std::vector<uint8_t> rgb(static_cast<size_t>(hw) * 3);
    for (int64_t p = 0; p < hw; ++p) {
        const float u = flow.data()[p], v = flow.data()[hw + p];
        const float mag = std::sqrt(u * u + v * v) / maxmag;
        float ang = std::atan2(-v, -u) / (2.0f * 3.14159265f) + 0.5f;  // [0,1)
        ang = std::min(std::max(ang, 0.0f), 0.999999f);
        hsv_to_rgb(ang, std::min(mag, 1.0f), 1.0f, &rgb[size_t(p * 3)]);
    }
    write_image_png(path, rgb.data(), w, h);
}

void write_disparity_visualization(const std::string& path, const Tensor<float>& disparity) {
    if (disparity.rank() != 3 || disparity.extent(0) != 1)
        throw DimensionError("disparity map must be [1,H,W]");
    const int64_t h = disparity.extent(1), w = disparity.extent(2), hw = h * w;
    float lo = disparity.data()[0], hi = disparity.data()[0];
    for (int64_t p = 1; p < hw; ++p) {
        lo = std::min(lo, disparity.data()[p]);
        hi = std::max(hi, disparity.data()[p]);
    }
    const float span = hi - lo > 1e-9f ? hi - lo : 1.0f;
    std::vector<uint8_t> rgb(static_cast<size_t>(hw) * 3);
    for (int64_t p = 0; p < hw; ++p) {
        const float t = (disparity.data()[p] - lo) / span;
        // cold-to-hot ramp
        hsv_to_rgb((1.0f - t) * 2.0f / 3.0f, 1.0f, 0.25f + 0.75f * t, &rgb[size_t(p * 3)]);
    }
    write_image_png(path, rgb.data(), w, h);
}

}  // namespace ncssd
