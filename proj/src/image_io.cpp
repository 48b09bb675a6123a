#include "adstage/image_io.hpp"

#include "adstage/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#ifdef ADSTAGE_HAVE_JPEG
#include <csetjmp>
#include <jpeglib.h>
#endif

namespace adstage {

namespace {

std::string lower_extension(const std::filesystem::path& path)
{
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

class PnmReader {
public:
    PnmReader(const std::vector<unsigned char>& bytes, std::string path)
        : bytes_(bytes)
        , path_(std::move(path))
    {
    }

    Tensor decode()
    {
        if (bytes_.size() < 2 || bytes_[0] != 'P')
            fail("missing P? magic");
        const char kind = static_cast<char>(bytes_[1]);
        if (kind != '2' && kind != '3' && kind != '5' && kind != '6')
            fail(std::string("unsupported PNM variant P") + kind);
        pos_ = 2;
        const std::size_t width = next_int(), height = next_int(), maxval = next_int();
        if (width == 0 || height == 0 || maxval == 0 || maxval > 65535)
            fail("bad header values");
        const bool colour = kind == '3' || kind == '6';
        const bool binary = kind == '5' || kind == '6';
        const std::size_t channels = colour ? 3 : 1;
        const std::size_t count = width * height * channels;

        std::vector<float> samples(count);
        if (binary) {
            ++pos_; // single whitespace after maxval
            const std::size_t bps = maxval > 255 ? 2 : 1;
            if (bytes_.size() < pos_ + count * bps)
                fail("truncated pixel data");
            for (std::size_t i = 0; i < count; ++i) {
                std::size_t v = bytes_[pos_ + i * bps];
                if (bps == 2)
                    v = (v << 8) | bytes_[pos_ + i * bps + 1];
                samples[i] = static_cast<float>(v);
            }
        } else {
            for (std::size_t i = 0; i < count; ++i)
                samples[i] = static_cast<float>(next_int());
        }

        Tensor img({height, width, 3});
        const float scale = 255.0f / static_cast<float>(maxval);
        for (std::size_t p = 0; p < width * height; ++p)
            for (std::size_t c = 0; c < 3; ++c) {
                float v = samples[p * channels + (colour ? c : 0)];
                if (v > static_cast<float>(maxval))
                    fail("sample exceeds maxval");
                img[p * 3 + c] = maxval == 255 ? v : v * scale;
            }
        return img;
    }

private:
    [[noreturn]] void fail(const std::string& why) const { throw DataError(path_ + ": " + why); }

    void skip_space()
    {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t next_int()
    {
        skip_space();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
            fail("expected an integer");
        std::size_t v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            ++pos_;
            if (v > (1u << 30))
                fail("integer out of range");
        }
        return v;
    }

    const std::vector<unsigned char>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

#ifdef ADSTAGE_HAVE_JPEG
struct JpegErrorManager {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

Tensor decode_jpeg(const std::vector<unsigned char>& bytes, const std::string& path)
{
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    std::vector<unsigned char> pixels;
    std::size_t width = 0, height = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DataError(path + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = cinfo.output_width;
    height = cinfo.output_height;
    pixels.resize(width * height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);

    Tensor img({height, width, 3});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        img[i] = static_cast<float>(pixels[i]);
    return img;
}
#endif

} // namespace

bool jpeg_supported() noexcept
{
#ifdef ADSTAGE_HAVE_JPEG
    return true;
#else
    return false;
#endif
}

bool is_supported_image(const std::filesystem::path& path)
{
    const auto ext = lower_extension(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")
        return true;
    return jpeg_supported() && (ext == ".jpg" || ext == ".jpeg");
}

Tensor read_image(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto ext = lower_extension(path);
    if (ext == ".jpg" || ext == ".jpeg") {
#ifdef ADSTAGE_HAVE_JPEG
        return decode_jpeg(bytes, path.string());
#else
        throw DataError(path.string() + ": JPEG support not compiled in; convert to PPM with scripts/convert_jpeg_to_ppm.py");
#endif
    }
    return PnmReader(bytes, path.string()).decode();
}

void write_ppm(const std::filesystem::path& path, const Tensor& image)
{
    if (image.rank() != 3 || image.dim(2) != 3)
        throw ShapeError("write_ppm expects [H,W,3], got " + shape_string(image.shape()));
    std::ostringstream out;
    out << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
    std::string data(image.size(), '\0');
    for (std::size_t i = 0; i < image.size(); ++i)
        data[i] = static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(image[i]), 0L, 255L)));
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot write " + path.string());
    f << out.str() << data;
    if (!f)
        throw IoError("write failed for " + path.string());
}

} // namespace adstage
