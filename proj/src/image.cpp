#include "fss/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fss {

int64_t Mask::count_fg() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v ? 1 : 0;
    return n;
}

namespace {

// Skips whitespace and '#' comment lines in a PNM header.
int read_pnm_int(std::istream& is) {
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (c == EOF) throw IoError("unexpected end of PNM header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

uint8_t to_byte(float v) {
    return static_cast<uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
    if (m0 != 'P' || m1 != '6') throw IoError("not a P6 PPM: " + path);
    int w = read_pnm_int(is);
    int h = read_pnm_int(is);
    int maxval = read_pnm_int(is);
    if (w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported PPM: " + path);
    Image img(h, w);
    std::vector<uint8_t> raw(static_cast<size_t>(h) * w * 3);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw IoError("short read: " + path);
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0f;
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> raw(img.pixels.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.pixels[i]);
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("short write: " + path);
}

Mask read_pgm_mask(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
    if (m0 != 'P' || m1 != '5') throw IoError("not a P5 PGM: " + path);
    int w = read_pnm_int(is);
    int h = read_pnm_int(is);
    int maxval = read_pnm_int(is);
    if (w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported PGM: " + path);
    Mask m(h, w);
    std::vector<uint8_t> raw(static_cast<size_t>(h) * w);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw IoError("short read: " + path);
    for (size_t i = 0; i < raw.size(); ++i) m.data[i] = raw[i] ? 1 : 0;
    return m;
}

void write_pgm(const std::string& path, const Mask& m, uint8_t fg_value) {
    std::vector<uint8_t> bytes(m.data.size());
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = m.data[i] ? fg_value : 0;
    write_pgm_raw(path, m.height, m.width, bytes);
}

void write_pgm_raw(const std::string& path, int height, int width,
                   const std::vector<uint8_t>& bytes) {
    if (bytes.size() != static_cast<size_t>(height) * width)
        throw DimensionError("write_pgm_raw: byte count mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P5\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("short write: " + path);
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) t.at(c, y, x) = img.at(y, x, c);
    return t;
}

Image tensor_to_image(const Tensor& t) {
    if (t.ndim() != 3 || t.dim(0) != 3) throw DimensionError("tensor_to_image: need (3,H,W)");
    Image img(t.dim(1), t.dim(2));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(t.at(c, y, x), 0.0f, 1.0f);
    return img;
}

Mask majority_downsample(const Mask& m, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw DimensionError("majority_downsample: bad target");
    Mask out(out_h, out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        int y0 = oy * m.height / out_h;
        int y1 = std::max(y0 + 1, (oy + 1) * m.height / out_h);
        for (int ox = 0; ox < out_w; ++ox) {
            int x0 = ox * m.width / out_w;
            int x1 = std::max(x0 + 1, (ox + 1) * m.width / out_w);
            int fg = 0, total = 0;
            for (int y = y0; y < y1 && y < m.height; ++y)
                for (int x = x0; x < x1 && x < m.width; ++x) {
                    fg += m.at(y, x) ? 1 : 0;
                    ++total;
                }
            // ties go to background
            out.at(oy, ox) = (2 * fg > total) ? 1 : 0;
        }
    }
    return out;
}

std::vector<int32_t> nn_resample_labels(const std::vector<int32_t>& labels, int in_h, int in_w,
                                        int out_h, int out_w) {
    if (labels.size() != static_cast<size_t>(in_h) * in_w)
        throw DimensionError("nn_resample_labels: size mismatch");
    std::vector<int32_t> out(static_cast<size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        int sy = std::min(in_h - 1, static_cast<int>((y + 0.5f) * in_h / out_h));
        for (int x = 0; x < out_w; ++x) {
            int sx = std::min(in_w - 1, static_cast<int>((x + 0.5f) * in_w / out_w));
            out[static_cast<size_t>(y) * out_w + x] = labels[static_cast<size_t>(sy) * in_w + sx];
        }
    }
    return out;
}

Image render_overlay(const Image& img, const Mask& mask) {
    if (img.height != mask.height || img.width != mask.width)
        throw DimensionError("render_overlay: shape mismatch");
    const float color[3] = {1.0f, 0.15f, 0.15f};
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (mask.at(y, x))
                for (int c = 0; c < 3; ++c)
                    out.at(y, x, c) = 0.5f * out.at(y, x, c) + 0.5f * color[c];
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

Mask flip_horizontal(const Mask& m) {
    Mask out(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) out.at(y, x) = m.at(y, m.width - 1 - x);
    return out;
}

std::vector<int32_t> flip_horizontal_labels(const std::vector<int32_t>& labels, int h, int w) {
    std::vector<int32_t> out(labels.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out[static_cast<size_t>(y) * w + x] = labels[static_cast<size_t>(y) * w + (w - 1 - x)];
    return out;
}

Image adjust_brightness_contrast(const Image& img, float brightness_delta, float contrast_scale) {
    Image out = img;
    for (auto& v : out.pixels)
        v = std::clamp((v - 0.5f) * contrast_scale + 0.5f + brightness_delta, 0.0f, 1.0f);
    return out;
}

Image crop_resize(const Image& img, float x0, float y0, float scale) {
    Image out(img.height, img.width);
    float cx0 = x0 * img.width, cy0 = y0 * img.height;
    float cw = scale * img.width, ch = scale * img.height;
    for (int y = 0; y < img.height; ++y) {
        float fy = cy0 + (img.height > 1 ? (ch - 1) * y / (img.height - 1) : 0.0f);
        fy = std::clamp(fy, 0.0f, static_cast<float>(img.height - 1));
        int y0i = static_cast<int>(fy);
        int y1i = std::min(y0i + 1, img.height - 1);
        float ay = fy - y0i;
        for (int x = 0; x < img.width; ++x) {
            float fx = cx0 + (img.width > 1 ? (cw - 1) * x / (img.width - 1) : 0.0f);
            fx = std::clamp(fx, 0.0f, static_cast<float>(img.width - 1));
            int x0i = static_cast<int>(fx);
            int x1i = std::min(x0i + 1, img.width - 1);
            float ax = fx - x0i;
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) =
                    (1 - ay) * ((1 - ax) * img.at(y0i, x0i, c) + ax * img.at(y0i, x1i, c)) +
                    ay * ((1 - ax) * img.at(y1i, x0i, c) + ax * img.at(y1i, x1i, c));
            }
        }
    }
    return out;
}

std::vector<int32_t> crop_resize_labels(const std::vector<int32_t>& labels, int h, int w, float x0,
                                        float y0, float scale) {
    if (labels.size() != static_cast<size_t>(h) * w)
        throw DimensionError("crop_resize_labels: size mismatch");
    std::vector<int32_t> out(labels.size());
    float cx0 = x0 * w, cy0 = y0 * h;
    float cw = scale * w, ch = scale * h;
    for (int y = 0; y < h; ++y) {
        float fy = cy0 + (h > 1 ? (ch - 1) * y / (h - 1) : 0.0f);
        int sy = std::clamp(static_cast<int>(fy + 0.5f), 0, h - 1);
        for (int x = 0; x < w; ++x) {
            float fx = cx0 + (w > 1 ? (cw - 1) * x / (w - 1) : 0.0f);
            int sx = std::clamp(static_cast<int>(fx + 0.5f), 0, w - 1);
            out[static_cast<size_t>(y) * w + x] = labels[static_cast<size_t>(sy) * w + sx];
        }
    }
    return out;
}

}  // namespace fss
