#pragma once

// Little-endian primitives and atomic file replacement shared by the
// dataset and weight formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "error.hpp"

namespace terrainprop::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

class ByteWriter {
public:
    void raw(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f32(float v) { put(v); }

    [[nodiscard]] const std::string& bytes() const { return buf_; }
    [[nodiscard]] std::size_t size() const { return buf_.size(); }

private:
    template <class T>
    void put(T v) {
        const T le = to_little(v);
        char tmp[sizeof(T)];
        std::memcpy(tmp, &le, sizeof(T));
        buf_.append(tmp, sizeof(T));
    }

    std::string buf_;
};

/// Bounds-checked cursor over an in-memory file. Every failure reports the
/// offset at which the missing bytes were expected.
class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    [[nodiscard]] std::size_t offset() const { return pos_; }
    [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }
    [[nodiscard]] bool at_end() const { return pos_ == data_.size(); }

    std::string_view raw(std::size_t n, std::string_view what) {
        require(n, what);
        const auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::uint8_t u8(std::string_view what) { return get<std::uint8_t>(what); }
    std::uint32_t u32(std::string_view what) { return get<std::uint32_t>(what); }
    std::uint64_t u64(std::string_view what) { return get<std::uint64_t>(what); }
    float f32(std::string_view what) { return get<float>(what); }

    void require(std::size_t n, std::string_view what) const {
        if (remaining() < n) {
            throw FormatError("truncated: " + std::string(what) + " needs " + std::to_string(n) + " bytes, " +
                                  std::to_string(remaining()) + " left",
                              pos_);
        }
    }

private:
    template <class T>
    T get(std::string_view what) {
        require(sizeof(T), what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("read failed: " + path.string());
    return data;
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot create " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw std::runtime_error("cannot replace " + path.string());
    }
}

}  // namespace terrainprop::io
