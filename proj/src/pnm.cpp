#include "strip/pnm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace strip {

namespace {

// Skips whitespace and '#' comments, then reads one unsigned integer.
int read_token_int(std::istream& is, const std::string& path) {
    int ch = is.get();
    while (is) {
        if (ch == '#') {
            while (is && ch != '\n') ch = is.get();
        } else if (std::isspace(ch)) {
            ch = is.get();
        } else {
            break;
        }
    }
    if (!is || !std::isdigit(ch)) throw std::runtime_error("pnm: malformed header: " + path);
    int value = 0;
    while (is && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        ch = is.get();
    }
    return value;
}

}  // namespace

Image read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open image: " + path);
    char p = 0, kind = 0;
    is.get(p);
    is.get(kind);
    if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
        throw std::runtime_error("pnm: unsupported format (want P2/P3/P5/P6): " + path);
    const bool color = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    const int w = read_token_int(is, path);
    const int h = read_token_int(is, path);
    const int maxval = read_token_int(is, path);
    if (maxval != 255) throw std::runtime_error("pnm: only maxval 255 supported: " + path);
    const int c = color ? 3 : 1;
    const std::size_t n = static_cast<std::size_t>(h) * w * c;
    std::vector<double> px(n);
    if (binary) {
        std::vector<unsigned char> raw(n);
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
        if (!is) throw std::runtime_error("pnm: truncated pixel data: " + path);
        for (std::size_t i = 0; i < n; ++i) px[i] = raw[i] / 255.0;
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            int v = read_token_int(is, path);
            if (v > maxval) throw std::runtime_error("pnm: sample exceeds maxval: " + path);
            px[i] = v / 255.0;
        }
    }
    return Image(h, w, c, std::move(px));
}

void write_pnm(const Image& img, const std::string& path) {
    if (img.channels() != 1 && img.channels() != 3)
        throw std::invalid_argument("write_pnm: only 1- or 3-channel images");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << (img.channels() == 1 ? "P5" : "P6") << "\n"
       << img.width() << " " << img.height() << "\n255\n";
    for (double v : img.pixels()) {
        unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace strip
