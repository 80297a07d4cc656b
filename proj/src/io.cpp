#include "hpm/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hpm/error.hpp"

namespace hpm::io {
namespace {

template <typename Word>
Word to_little(Word w) {
    if constexpr (std::endian::native == std::endian::little) {
        return w;
    } else {
        Word out = 0;
        for (std::size_t i = 0; i < sizeof(Word); ++i) {
            out = (out << 8) | (w & 0xFF);
            w >>= 8;
        }
        return out;
    }
}

template <typename Word>
void append_word(std::string& out, Word w) {
    w = to_little(w);
    char buf[sizeof(Word)];
    std::memcpy(buf, &w, sizeof(Word));
    out.append(buf, sizeof(Word));
}

template <typename Word>
std::vector<Word> decode_words(std::string_view bytes, const char* what) {
    if (bytes.size() % sizeof(Word) != 0) {
        throw IoError(std::string("truncated ") + what + " blob");
    }
    std::vector<Word> out(bytes.size() / sizeof(Word));
    for (std::size_t i = 0; i < out.size(); ++i) {
        Word w;
        std::memcpy(&w, bytes.data() + i * sizeof(Word), sizeof(Word));
        out[i] = to_little(w);
    }
    return out;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failed: " + path.string());
    }
    return std::move(ss).str();
}

void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + path.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw IoError("write failed: " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

std::string encode_f32le(std::span<const double> values) {
    std::string out;
    out.reserve(values.size() * 4);
    for (double v : values) {
        append_word(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

std::string encode_f64le(std::span<const double> values) {
    std::string out;
    out.reserve(values.size() * 8);
    for (double v : values) {
        append_word(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

std::string encode_u32le(std::span<const std::uint32_t> values) {
    std::string out;
    out.reserve(values.size() * 4);
    for (auto v : values) {
        append_word(out, v);
    }
    return out;
}

std::vector<double> decode_f32le(std::string_view bytes) {
    auto words = decode_words<std::uint32_t>(bytes, "f32");
    std::vector<double> out(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        out[i] = static_cast<double>(std::bit_cast<float>(words[i]));
    }
    return out;
}

std::vector<double> decode_f64le(std::string_view bytes) {
    auto words = decode_words<std::uint64_t>(bytes, "f64");
    std::vector<double> out(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        out[i] = std::bit_cast<double>(words[i]);
    }
    return out;
}

std::vector<std::uint32_t> decode_u32le(std::string_view bytes) {
    return decode_words<std::uint32_t>(bytes, "u32");
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace hpm::io
