#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fss/tensor.hpp"

namespace fss {

// RGB image, values in [0,1], row-major interleaved.
struct Image {
    int height = 0, width = 0;
    std::vector<float> pixels;  // height*width*3

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<size_t>(h) * w * 3, 0.0f) {}
    float& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

// Binary mask; nonzero = foreground.
struct Mask {
    int height = 0, width = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}
    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    int64_t count_fg() const;
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
Mask read_pgm_mask(const std::string& path);                 // nonzero -> 1
void write_pgm(const std::string& path, const Mask& m, uint8_t fg_value = 255);
void write_pgm_raw(const std::string& path, int height, int width,
                   const std::vector<uint8_t>& bytes);

Tensor image_to_tensor(const Image& img);  // (3,H,W)
Image tensor_to_image(const Tensor& t);    // clamps into [0,1]

// Majority vote per cell block; ties go to background.
Mask majority_downsample(const Mask& m, int out_h, int out_w);
// Center-based nearest neighbor for integer label maps.
std::vector<int32_t> nn_resample_labels(const std::vector<int32_t>& labels, int in_h, int in_w,
                                        int out_h, int out_w);

// 50% alpha blend of a fixed highlight color over foreground pixels.
Image render_overlay(const Image& img, const Mask& mask);

// Augmentation primitives (all deterministic given their arguments).
Image flip_horizontal(const Image& img);
Mask flip_horizontal(const Mask& m);
std::vector<int32_t> flip_horizontal_labels(const std::vector<int32_t>& labels, int h, int w);
Image adjust_brightness_contrast(const Image& img, float brightness_delta, float contrast_scale);
// Crop the normalized rect [x0,y0,x0+s,y0+s] (fractions of the side) and
// resize back to the original size; bilinear for images.
Image crop_resize(const Image& img, float x0, float y0, float scale);
std::vector<int32_t> crop_resize_labels(const std::vector<int32_t>& labels, int h, int w, float x0,
                                        float y0, float scale);

}  // namespace fss
