#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace atnet {

/// Thrown for malformed inputs: shape mismatches, invalid values, bad configuration.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for file system and decode/encode failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Smallest side accepted by the restoration pipeline.
inline constexpr int kMinPipelineSide = 8;

/// H x W x C image, row-major, channel-interleaved, values in [0, 1].
/// Channel order is RGB for 3-channel images.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0);

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }
    bool operator==(const Image&) const = default;
};

/// Throws InvalidArgument unless every value is finite and in [0, 1] and the shape is consistent.
void validate_image(const Image& img);
/// validate_image plus the pipeline minimum side.
void validate_pipeline_image(const Image& img);
void require_same_shape(const Image& a, const Image& b, const char* what);

Image clamp01(Image img);

/// Reads an 8-bit grayscale or RGB PNG/JPEG. Alpha is dropped.
Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit PNG with value round(v * 255) (half up).
void save_image(const Image& img, const std::filesystem::path& path);

bool is_supported_image_file(const std::filesystem::path& path);

/// Sorted list of loadable image files directly inside dir.
std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir);

}  // namespace atnet
