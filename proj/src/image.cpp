#include "atnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace atnet {

namespace fs = std::filesystem;

Image::Image(int h, int w, int c, double fill) : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || (c != 1 && c != 3)) {
        throw InvalidArgument("image shape must be positive with 1 or 3 channels, got " + std::to_string(h) + "x" +
                              std::to_string(w) + "x" + std::to_string(c));
    }
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

void validate_image(const Image& img) {
    if (img.height <= 0 || img.width <= 0 || (img.channels != 1 && img.channels != 3)) {
        throw InvalidArgument("invalid image shape");
    }
    if (img.data.size() != static_cast<std::size_t>(img.height) * img.width * img.channels) {
        throw InvalidArgument("image buffer size does not match its shape");
    }
    for (double v : img.data) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw InvalidArgument("image value " + std::to_string(v) + " outside [0,1]");
        }
    }
}

void validate_pipeline_image(const Image& img) {
    validate_image(img);
    if (img.height < kMinPipelineSide || img.width < kMinPipelineSide) {
        throw InvalidArgument("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                              " is smaller than the 8x8 pipeline minimum");
    }
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw InvalidArgument(std::string(what) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                              std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                              std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                              std::to_string(b.channels) + ")");
    }
}

Image clamp01(Image img) {
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

bool is_supported_image_file(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_image_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_supported_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

namespace {

Image from_bytes(const unsigned char* bytes, int h, int w, int c) {
    Image img(h, w, c);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

Image load_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
    }
    struct Guard {
        png_image* p;
        ~Guard() { png_image_free(p); }
    } guard{&png};
    if (png.format & PNG_FORMAT_FLAG_LINEAR) {
        throw IoError("unsupported format: " + path.string() + " is not 8-bit");
    }
    if (png.width == 0 || png.height == 0) throw IoError("zero-sized image: " + path.string());
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
    }
    return from_bytes(buffer.data(), static_cast<int>(png.height), static_cast<int>(png.width), color ? 3 : 1);
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

Image load_jpeg(const fs::path& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!file) throw IoError("cannot open " + path.string());

    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    std::vector<unsigned char> buffer;
    int h = 0, w = 0, c = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("cannot decode JPEG " + path.string() + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = static_cast<int>(cinfo.output_height);
    w = static_cast<int>(cinfo.output_width);
    c = cinfo.output_components;
    buffer.resize(static_cast<std::size_t>(h) * w * c);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = buffer.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * c;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    if (h == 0 || w == 0) throw IoError("zero-sized image: " + path.string());
    return from_bytes(buffer.data(), h, w, c);
}

}  // namespace

Image load_image(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("missing file: " + path.string());
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") return load_png(path);
    if (ext == ".jpg" || ext == ".jpeg") return load_jpeg(path);
    throw IoError("unsupported image format: " + path.string());
}

void save_image(const Image& img, const fs::path& path) {
    validate_image(img);
    std::vector<unsigned char> bytes(img.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<unsigned char>(std::clamp(std::floor(img.data[i] * 255.0 + 0.5), 0.0, 255.0));
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot write " + path.string() + ": " + msg);
    }
}

}  // namespace atnet
