#include "tactile/image.hpp"

#include <fstream>
#include <istream>
#include <sstream>

namespace tactile {
namespace {

struct NetpbmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    int maxval = 0;
};

void skip_space_and_comments(std::istream& in) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

NetpbmHeader read_header(std::istream& in, const std::filesystem::path& path) {
    NetpbmHeader h;
    in >> h.magic;
    skip_space_and_comments(in);
    in >> h.width;
    skip_space_and_comments(in);
    in >> h.height;
    skip_space_and_comments(in);
    in >> h.maxval;
    if (!in || h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535)
        throw DataError("malformed netpbm header in " + path.string());
    in.get();  // single whitespace byte before raster
    return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

template <typename Img>
void read_raster8(std::istream& in, Img& img, const std::filesystem::path& path) {
    auto bytes = img.data();
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw DataError("truncated raster in " + path.string());
}

}  // namespace

Frame read_ppm(const std::filesystem::path& path) {
    auto in = open_in(path);
    const auto h = read_header(in, path);
    if (h.magic != "P6" || h.maxval != 255)
        throw DataError(path.string() + ": expected 8-bit binary PPM (P6)");
    Frame frame(h.width, h.height);
    read_raster8(in, frame, path);
    return frame;
}

void write_ppm(const std::filesystem::path& path, const Frame& frame) {
    auto out = open_out(path);
    out << "P6\n" << frame.width() << ' ' << frame.height() << "\n255\n";
    auto bytes = frame.data();
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GrayFrame read_pgm(const std::filesystem::path& path) {
    auto in = open_in(path);
    const auto h = read_header(in, path);
    if (h.magic != "P5" || h.maxval != 255)
        throw DataError(path.string() + ": expected 8-bit binary PGM (P5)");
    GrayFrame frame(h.width, h.height);
    read_raster8(in, frame, path);
    return frame;
}

void write_pgm(const std::filesystem::path& path, const GrayFrame& frame) {
    auto out = open_out(path);
    out << "P5\n" << frame.width() << ' ' << frame.height() << "\n255\n";
    auto bytes = frame.data();
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image<std::uint16_t, 1> read_pgm16(const std::filesystem::path& path) {
    auto in = open_in(path);
    const auto h = read_header(in, path);
    if (h.magic != "P5" || h.maxval < 256)
        throw DataError(path.string() + ": expected 16-bit binary PGM (P5)");
    Image<std::uint16_t, 1> img(h.width, h.height);
    std::vector<unsigned char> raw(img.pixel_count() * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("truncated raster in " + path.string());
    auto px = img.data();
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);  // big-endian
    return img;
}

void write_pgm16(const std::filesystem::path& path, const Image<std::uint16_t, 1>& img) {
    auto out = open_out(path);
    out << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
    std::vector<unsigned char> raw(img.pixel_count() * 2);
    auto px = img.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
        raw[2 * i] = static_cast<unsigned char>(px[i] >> 8);
        raw[2 * i + 1] = static_cast<unsigned char>(px[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace tactile
