#include "owd/imageio.hpp"

#include <fstream>

#include "owd/errors.hpp"

namespace owd {

namespace {

void write_pnm_header(std::ofstream& f, const char* magic, int w, int h) {
    f << magic << "\n" << w << " " << h << "\n255\n";
}

void read_pnm_header(std::ifstream& f, const char* magic, int& w, int& h,
                     const std::string& path) {
    std::string m;
    int maxval = 0;
    f >> m >> w >> h >> maxval;
    if (!f || m != magic || w <= 0 || h <= 0 || maxval != 255)
        throw SchemaError("bad " + std::string(magic) + " header: " + path);
    f.get();  // single whitespace before raster
}

}  // namespace

void write_ppm(const std::string& path, const ImageU8& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    write_pnm_header(f, "P6", img.width, img.height);
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw IoError("write failed: " + path);
}

ImageU8 read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    ImageU8 img;
    read_pnm_header(f, "P6", img.width, img.height, path);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw SchemaError("truncated ppm: " + path);
    return img;
}

void write_mask_pgm(const std::string& path, const BinaryMask& mask) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    write_pnm_header(f, "P5", mask.width, mask.height);
    std::vector<std::uint8_t> raster(mask.cells.size());
    for (std::size_t i = 0; i < raster.size(); ++i) raster[i] = mask.cells[i] ? 255 : 0;
    f.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
    if (!f) throw IoError("write failed: " + path);
}

BinaryMask read_mask_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    int w = 0, h = 0;
    read_pnm_header(f, "P5", w, h, path);
    std::vector<std::uint8_t> raster(static_cast<std::size_t>(w) * h);
    f.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (!f) throw SchemaError("truncated pgm: " + path);
    BinaryMask mask(h, w);
    for (std::size_t i = 0; i < raster.size(); ++i) mask.cells[i] = raster[i] > 127 ? 1 : 0;
    return mask;
}

}  // namespace owd
