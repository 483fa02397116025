#include "io_util.hpp"

#include "del/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace del::detail {

namespace fs = std::filesystem;

void write_f64(const fs::path& path, const double* data, std::size_t count) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < count; ++i) {
        const auto u = std::bit_cast<std::uint64_t>(data[i]);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(u >> (8 * k));
        f.write(reinterpret_cast<const char*>(b), 8);
    }
    if (!f) throw IoError("short write to " + path.string());
}

Eigen::VectorXd read_f64(const fs::path& path, std::size_t count) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    Eigen::VectorXd v(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char b[8];
        if (!f.read(reinterpret_cast<char*>(b), 8)) throw IoError(path.string() + " is truncated");
        std::uint64_t u = 0;
        for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        v[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(u);
    }
    if (f.peek() != std::char_traits<char>::eof())
        throw IoError(path.string() + " has trailing data");
    return v;
}

fs::path staging_dir(const fs::path& dir) {
    std::error_code ec;
    const fs::path tmp = dir.string() + ".tmp";
    fs::remove_all(tmp, ec);
    if (!fs::create_directories(tmp, ec) && ec)
        throw IoError("cannot create " + tmp.string() + ": " + ec.message());
    return tmp;
}

void commit_dir(const fs::path& staging, const fs::path& dir) {
    std::error_code ec;
    const fs::path old = dir.string() + ".old";
    fs::remove_all(old, ec);
    if (fs::exists(dir)) {
        fs::rename(dir, old, ec);
        if (ec) throw IoError("cannot replace " + dir.string() + ": " + ec.message());
    }
    fs::rename(staging, dir, ec);
    if (ec) throw IoError("cannot move " + staging.string() + " into place: " + ec.message());
    fs::remove_all(old, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

} // namespace del::detail
