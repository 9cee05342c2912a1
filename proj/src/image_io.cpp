#include "hv/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hv/errors.hpp"

namespace hv {

namespace {

uint8_t to_byte(float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

void write_netpbm(const std::filesystem::path& path, const Tensor& img, int channels, const char* magic) {
    const Shape& d = img.dims();
    if (d.size() != 3 || d[0] != channels)
        throw ShapeError(std::string(magic) + " writer expects [" + std::to_string(channels) + ",H,W], got " +
                         to_string(d));
    const int64_t H = d[1], W = d[2];
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write " + path.string());
    os << magic << "\n" << W << " " << H << "\n255\n";
    std::vector<char> buf(static_cast<size_t>(H * W * channels));
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int c = 0; c < channels; ++c)
                buf[static_cast<size_t>((y * W + x) * channels + c)] =
                    static_cast<char>(to_byte(img[(c * H + y) * W + x]));
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw InputError("write failed: " + path.string());
}

// next header token, skipping whitespace and '#' comments
std::string token(std::istream& is) {
    std::string t;
    char ch;
    while (is.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(is, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!t.empty()) break;
            continue;
        }
        t.push_back(ch);
    }
    return t;
}

Tensor read_netpbm(const std::filesystem::path& path, int channels, const char* magic) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open " + path.string());
    if (token(is) != magic) throw InputError(path.string() + ": not a " + magic + " file");
    int64_t W = 0, H = 0, maxval = 0;
    try {
        W = std::stoll(token(is));
        H = std::stoll(token(is));
        maxval = std::stoll(token(is));
    } catch (const std::exception&) {
        throw InputError(path.string() + ": malformed header");
    }
    if (W <= 0 || H <= 0 || maxval != 255) throw InputError(path.string() + ": unsupported dims or maxval");
    std::vector<unsigned char> buf(static_cast<size_t>(H * W * channels));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw InputError(path.string() + ": truncated pixel data");
    Tensor img(Shape{channels, H, W});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int c = 0; c < channels; ++c)
                img[(c * H + y) * W + x] = static_cast<float>(buf[static_cast<size_t>((y * W + x) * channels + c)] / 255.0);
    return img;
}

} // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& image) { write_netpbm(path, image, 3, "P6"); }
Tensor read_ppm(const std::filesystem::path& path) { return read_netpbm(path, 3, "P6"); }
void write_pgm(const std::filesystem::path& path, const Tensor& gray) { write_netpbm(path, gray, 1, "P5"); }
Tensor read_pgm(const std::filesystem::path& path) { return read_netpbm(path, 1, "P5"); }

Tensor quantize8(const Tensor& image) {
    Tensor out(image.dims());
    for (int64_t i = 0; i < image.size(); ++i) out[i] = static_cast<float>(to_byte(image[i]) / 255.0);
    return out;
}

Tensor unbatch(const Tensor& t) {
    Shape d = t.dims();
    if (d.empty() || d[0] != 1) throw ShapeError("unbatch expects a leading axis of 1, got " + to_string(d));
    d.erase(d.begin());
    return t.reshaped(d);
}

Tensor batch1(const Tensor& t) {
    Shape d = t.dims();
    d.insert(d.begin(), 1);
    return t.reshaped(d);
}

Tensor stack(const std::vector<Tensor>& images) {
    if (images.empty()) throw ShapeError("stack: no images");
    Shape d = images[0].dims();
    for (const Tensor& t : images) require_same_dims(d, t.dims(), "stack");
    d.insert(d.begin(), static_cast<int64_t>(images.size()));
    Tensor out(d);
    const int64_t inner = images[0].size();
    for (size_t i = 0; i < images.size(); ++i)
        std::copy(images[i].data(), images[i].data() + inner, out.data() + static_cast<int64_t>(i) * inner);
    return out;
}

} // namespace hv
