#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ourdb/errors.hpp"

// Little-endian binary container shared by the dataset ("ODBD"), checkpoint
// ("ODBC") and Fisher snapshot ("ODBF") formats: 4-byte magic, u32 version,
// u32 header length, JSON header, raw payload.
namespace ourdb::io {

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), f_(path, std::ios::binary) {
        if (!f_) throw DataError("cannot open '" + path + "' for writing");
    }

    void bytes(const void* p, size_t n) {
        f_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!f_) throw DataError("write failed on '" + path_ + "'");
    }
    void magic(const char m[4]) { bytes(m, 4); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void f32_vec(const std::vector<float>& v) { bytes(v.data(), v.size() * 4); }
    void f64_vec(const std::vector<double>& v) { bytes(v.data(), v.size() * 8); }
    void u8_vec(const std::vector<uint8_t>& v) { bytes(v.data(), v.size()); }
    void json_header(const nlohmann::json& j) {
        const std::string s = j.dump();
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

private:
    std::string path_;
    std::ofstream f_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), f_(path, std::ios::binary) {
        if (!f_) throw DataError("cannot open '" + path + "' for reading");
    }

    size_t offset() const { return off_; }

    void bytes(void* p, size_t n) {
        f_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(f_.gcount()) != n)
            throw DataError("'" + path_ + "': truncated, expected " + std::to_string(n) +
                            " bytes at byte offset " + std::to_string(off_));
        off_ += n;
    }
    void expect_magic(const char m[4]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            throw DataError("'" + path_ + "': bad magic at byte offset 0, expected '" +
                            std::string(m, 4) + "'");
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    void f32_vec(std::vector<float>& v, size_t n) {
        v.resize(n);
        bytes(v.data(), n * 4);
    }
    void f64_vec(std::vector<double>& v, size_t n) {
        v.resize(n);
        bytes(v.data(), n * 8);
    }
    void u8_vec(std::vector<uint8_t>& v, size_t n) {
        v.resize(n);
        bytes(v.data(), n);
    }
    nlohmann::json json_header() {
        const uint32_t len = u32();
        const size_t at = off_;
        std::string s(len, '\0');
        bytes(s.data(), len);
        nlohmann::json j = nlohmann::json::parse(s, nullptr, false);
        if (j.is_discarded())
            throw DataError("'" + path_ + "': malformed JSON header at byte offset " +
                            std::to_string(at));
        return j;
    }
    void expect_eof() {
        char c;
        f_.read(&c, 1);
        if (f_.gcount() != 0)
            throw DataError("'" + path_ + "': trailing bytes at byte offset " +
                            std::to_string(off_));
    }

private:
    std::string path_;
    std::ifstream f_;
    size_t off_ = 0;
};

}  // namespace ourdb::io
