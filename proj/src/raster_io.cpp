#include "floodsr/raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace floodsr {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::string& header, const char* payload,
          std::size_t bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot create " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload, static_cast<std::streamsize>(bytes));
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

// Netpbm header tokens are separated by whitespace; '#' starts a comment.
class PnmHeader {
public:
    explicit PnmHeader(const std::vector<char>& bytes) : bytes_(bytes) {}

    std::size_t read_number(const std::filesystem::path& path) {
        skip_space_and_comments();
        std::size_t value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            ++pos_;
            if (++digits > 9) fail(ErrorKind::MalformedHeader, "oversized header field in " + path.string());
        }
        if (digits == 0) fail(ErrorKind::MalformedHeader, "expected a number in header of " + path.string());
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t payload_offset(const std::filesystem::path& path) {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            fail(ErrorKind::MalformedHeader, "missing separator before payload in " + path.string());
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = static_cast<unsigned char>(bytes_[pos_]);
            if (std::isspace(c)) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<char>& bytes_;
    std::size_t pos_ = 2;
};

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
    return v;
}

}  // namespace

BinaryGrid read_binary_grid(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        fail(ErrorKind::MalformedHeader, "not a P5 PGM: " + path.string());
    }
    PnmHeader header(bytes);
    const std::size_t cols = header.read_number(path);
    const std::size_t rows = header.read_number(path);
    const std::size_t maxval = header.read_number(path);
    if (maxval != 255) fail(ErrorKind::MalformedHeader, "maxval must be 255 in " + path.string());
    const std::size_t offset = header.payload_offset(path);
    const std::size_t n = rows * cols;
    if (bytes.size() < offset + n) {
        fail(ErrorKind::TruncatedPayload, "expected " + std::to_string(n) + " payload bytes in " + path.string());
    }
    std::vector<std::uint8_t> cells(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto b = static_cast<unsigned char>(bytes[offset + k]);
        if (b == 255) {
            cells[k] = 1;
        } else if (b == 0) {
            cells[k] = 0;
        } else {
            fail(ErrorKind::IllegalPixel,
                 "byte " + std::to_string(b) + " at offset " + std::to_string(k) + " in " + path.string());
        }
    }
    return BinaryGrid(rows, cols, std::move(cells));
}

void write_binary_grid(const BinaryGrid& grid, const std::filesystem::path& path) {
    std::vector<char> payload(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) payload[k] = grid[k] ? static_cast<char>(255) : 0;
    const std::string header =
        "P5\n" + std::to_string(grid.cols()) + " " + std::to_string(grid.rows()) + "\n255\n";
    dump(path, header, payload.data(), payload.size());
}

void write_gray_image(const Grid<std::uint8_t>& pixels, const std::filesystem::path& path) {
    const std::string header =
        "P5\n" + std::to_string(pixels.cols()) + " " + std::to_string(pixels.rows()) + "\n255\n";
    dump(path, header, reinterpret_cast<const char*>(pixels.cells().data()), pixels.size());
}

FractionGrid read_fraction_grid(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const auto newline = std::find(bytes.begin(), bytes.end(), '\n');
    if (newline == bytes.end()) fail(ErrorKind::MalformedHeader, "no WFG1 header line in " + path.string());
    const std::string line(bytes.begin(), newline);

    // Strict: "WFG1 <rows> <cols>" with single spaces and plain decimal digits.
    std::size_t rows = 0;
    std::size_t cols = 0;
    {
        if (line.rfind("WFG1 ", 0) != 0) fail(ErrorKind::MalformedHeader, "bad WFG1 magic in " + path.string());
        const std::string rest = line.substr(5);
        const auto space = rest.find(' ');
        auto parse = [&](const std::string& s) {
            if (s.empty() || s.size() > 9) fail(ErrorKind::MalformedHeader, "bad WFG1 dimension in " + path.string());
            std::size_t v = 0;
            for (char c : s) {
                if (!std::isdigit(static_cast<unsigned char>(c))) {
                    fail(ErrorKind::MalformedHeader, "bad WFG1 dimension in " + path.string());
                }
                v = v * 10 + static_cast<std::size_t>(c - '0');
            }
            return v;
        };
        if (space == std::string::npos) fail(ErrorKind::MalformedHeader, "bad WFG1 header in " + path.string());
        rows = parse(rest.substr(0, space));
        cols = parse(rest.substr(space + 1));
    }

    const std::size_t offset = static_cast<std::size_t>(newline - bytes.begin()) + 1;
    const std::size_t n = rows * cols;
    if (bytes.size() < offset + 4 * n) {
        fail(ErrorKind::TruncatedPayload, "expected " + std::to_string(n) + " values in " + path.string());
    }
    if (bytes.size() > offset + 4 * n) {
        fail(ErrorKind::MalformedHeader, "trailing bytes after WFG1 payload in " + path.string());
    }
    std::vector<float> cells(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::uint32_t raw = 0;
        std::memcpy(&raw, bytes.data() + offset + 4 * k, 4);
        const float v = std::bit_cast<float>(to_le(raw));
        if (!std::isfinite(v)) {
            fail(ErrorKind::NonFiniteValue, "non-finite value at index " + std::to_string(k) + " in " + path.string());
        }
        cells[k] = v;
    }
    return FractionGrid(rows, cols, std::move(cells));
}

void write_fraction_grid(const FractionGrid& grid, const std::filesystem::path& path) {
    std::vector<std::uint32_t> payload(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) payload[k] = to_le(std::bit_cast<std::uint32_t>(grid[k]));
    const std::string header = "WFG1 " + std::to_string(grid.rows()) + " " + std::to_string(grid.cols()) + "\n";
    dump(path, header, reinterpret_cast<const char*>(payload.data()), payload.size() * 4);
}

}  // namespace floodsr
