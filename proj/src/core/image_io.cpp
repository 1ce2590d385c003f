#include "drift/core/image_io.hpp"

#include "drift/core/error.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

namespace drift {
namespace {

using FilePtr = std::unique_ptr<std::FILE, decltype(&std::fclose)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    return f;
}

std::string lower_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
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

Image read_jpeg(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw IoError("jpeg decode failed for " + path.string() + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const int w = static_cast<int>(cinfo.output_width);
    const int h = static_cast<int>(cinfo.output_height);
    Image image(h, w);
    std::vector<JSAMPLE> row(static_cast<std::size_t>(w) * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        const int y = static_cast<int>(cinfo.output_scanline);
        JSAMPROW rows[1] = {row.data()};
        jpeg_read_scanlines(&cinfo, rows, 1);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                image.at(y, x, c) = row[static_cast<std::size_t>(x * 3 + c)] / 255.0f;
            }
        }
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return image;
}

// RAII wrapper around a libpng read struct.
class PngReader {
  public:
    explicit PngReader(const std::filesystem::path& path) : file_(open_file(path, "rb")), path_(path) {
        png_byte sig[8];
        if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
            throw IoError(path.string() + " is not a PNG file");
        }
        png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info_ = png_create_info_struct(png_);
        if (!png_ || !info_) {
            throw IoError("libpng allocation failed");
        }
        if (setjmp(png_jmpbuf(png_))) {
            throw IoError("png header decode failed for " + path.string());
        }
        png_init_io(png_, file_.get());
        png_set_sig_bytes(png_, 8);
        png_read_info(png_, info_);
    }
    ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    png_structp png() { return png_; }
    png_infop info() { return info_; }

    std::vector<std::vector<png_byte>> read_rows() {
        png_read_update_info(png_, info_);
        const auto h = png_get_image_height(png_, info_);
        const auto rowbytes = png_get_rowbytes(png_, info_);
        std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(rowbytes));
        std::vector<png_bytep> ptrs(h);
        for (png_uint_32 y = 0; y < h; ++y) {
            ptrs[y] = rows[y].data();
        }
        if (setjmp(png_jmpbuf(png_))) {
            throw IoError("png pixel decode failed for " + path_.string());
        }
        png_read_image(png_, ptrs.data());
        png_read_end(png_, nullptr);
        return rows;
    }

  private:
    FilePtr file_;
    std::filesystem::path path_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
};

Image read_png_rgb(const std::filesystem::path& path) {
    PngReader reader(path);
    auto* png = reader.png();
    auto* info = reader.info();
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (depth < 8) {
            png_set_expand_gray_1_2_4_to_8(png);
        }
        png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
    }
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const auto rows = reader.read_rows();
    Image image(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                image.at(y, x, c) = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x * 3 + c)] / 255.0f;
            }
        }
    }
    return image;
}

class PngWriter {
  public:
    explicit PngWriter(const std::filesystem::path& path) : file_(open_file(path, "wb")) {
        png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info_ = png_create_info_struct(png_);
        if (!png_ || !info_) {
            throw IoError("libpng allocation failed");
        }
        png_init_io(png_, file_.get());
    }
    ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;

    png_structp png() { return png_; }
    png_infop info() { return info_; }

  private:
    FilePtr file_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
};

} // namespace

const Palette& davis_palette() {
    static const Palette palette = [] {
        Palette p(256);
        for (int i = 0; i < 256; ++i) {
            int r = 0, g = 0, b = 0;
            int c = i;
            for (int j = 0; j < 8; ++j) {
                r |= ((c >> 0) & 1) << (7 - j);
                g |= ((c >> 1) & 1) << (7 - j);
                b |= ((c >> 2) & 1) << (7 - j);
                c >>= 3;
            }
            p[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                              static_cast<std::uint8_t>(b)};
        }
        return p;
    }();
    return palette;
}

Image read_image(const std::filesystem::path& path) {
    const auto ext = lower_extension(path);
    if (ext == ".jpg" || ext == ".jpeg") {
        return read_jpeg(path);
    }
    if (ext == ".png") {
        return read_png_rgb(path);
    }
    throw IoError("unsupported image format: " + path.string());
}

void write_image_png(const std::filesystem::path& path, const Image& image) {
    PngWriter writer(path);
    auto* png = writer.png();
    if (setjmp(png_jmpbuf(png))) {
        throw IoError("png encode failed for " + path.string());
    }
    png_set_IHDR(png, writer.info(), static_cast<png_uint_32>(image.width()),
                 static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, writer.info());
    std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * 3);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
                row[static_cast<std::size_t>(x * 3 + c)] = static_cast<png_byte>(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
}

LabelImage read_label_png(const std::filesystem::path& path) {
    PngReader reader(path);
    auto* png = reader.png();
    auto* info = reader.info();
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    LabelImage out;
    if (color == PNG_COLOR_TYPE_PALETTE) {
        out.indexed = true;
        png_colorp entries = nullptr;
        int count = 0;
        png_get_PLTE(png, info, &entries, &count);
        out.palette.resize(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            out.palette[static_cast<std::size_t>(i)] = {entries[i].red, entries[i].green, entries[i].blue};
        }
    } else if (color != PNG_COLOR_TYPE_GRAY || depth == 16) {
        throw IoError("palette mismatch: " + path.string() +
                      " is not an indexed-palette or 8-bit grayscale label image");
    }
    if (depth < 8) {
        png_set_packing(png);
    }
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const auto rows = reader.read_rows();
    out.labels = Grid<std::uint8_t>(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.labels(y, x) = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
        }
    }
    return out;
}

void write_label_png(const std::filesystem::path& path, const Grid<std::uint8_t>& labels,
                     const Palette& palette) {
    if (palette.empty() || palette.size() > 256) {
        throw IoError("write_label_png: palette must have 1..256 entries");
    }
    PngWriter writer(path);
    auto* png = writer.png();
    if (setjmp(png_jmpbuf(png))) {
        throw IoError("png encode failed for " + path.string());
    }
    png_set_IHDR(png, writer.info(), static_cast<png_uint_32>(labels.width()),
                 static_cast<png_uint_32>(labels.height()), 8, PNG_COLOR_TYPE_PALETTE,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> entries(palette.size());
    for (std::size_t i = 0; i < palette.size(); ++i) {
        entries[i] = {palette[i][0], palette[i][1], palette[i][2]};
    }
    png_set_PLTE(png, writer.info(), entries.data(), static_cast<int>(entries.size()));
    png_write_info(png, writer.info());
    std::vector<png_byte> row(static_cast<std::size_t>(labels.width()));
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            row[static_cast<std::size_t>(x)] = labels(y, x);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
}

} // namespace drift
