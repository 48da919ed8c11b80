#pragma once

// Binary HJBTable file:
//   "FUNDMMHJ" | u32 version | GridSpec | HJBParams | u64 count | f64[count] theta | u32 crc32
// All fields little-endian; the CRC-32 covers every byte before it.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "fundmm/errors.hpp"
#include "fundmm/hjb_solver.hpp"

namespace fundmm {

static_assert(std::endian::native == std::endian::little, "table files assume a little-endian host");

inline constexpr char kTableMagic[8] = {'F', 'U', 'N', 'D', 'M', 'M', 'H', 'J'};
inline constexpr std::uint32_t kTableVersion = 1;

namespace detail {

class ByteWriter {
public:
    template <typename T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    std::vector<unsigned char>& bytes() { return bytes_; }

private:
    std::vector<unsigned char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<unsigned char>& b) : bytes_(b) {}
    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > bytes_.size()) throw InvalidInput("table file truncated");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> serialize_table(const HJBTable& t) {
    detail::ByteWriter w;
    w.put_raw(kTableMagic, sizeof(kTableMagic));
    w.put(kTableVersion);
    const auto& g = t.grid;
    w.put(g.horizon);
    w.put(g.n_time);
    w.put(g.q_min);
    w.put(g.q_max);
    w.put(g.dq);
    w.put(g.f_min);
    w.put(g.f_max);
    w.put(g.n_f);
    const auto& p = t.params;
    w.put(p.ou_cash.kappa);
    w.put(p.ou_cash.theta);
    w.put(p.ou_cash.sigma);
    w.put(p.fill.lambda0);
    w.put(p.fill.k);
    w.put(p.fill.delta_min);
    w.put(p.alpha);
    w.put(p.phi);
    w.put(static_cast<std::uint64_t>(t.theta.size()));
    w.put_raw(t.theta.data(), t.theta.size() * sizeof(double));
    const auto crc = detail::crc32_of(w.bytes().data(), w.bytes().size());
    w.put(crc);
    return std::move(w.bytes());
}

inline HJBTable deserialize_table(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < sizeof(kTableMagic) + 8) throw InvalidInput("table file truncated");
    if (std::memcmp(bytes.data(), kTableMagic, sizeof(kTableMagic)) != 0)
        throw InvalidInput("not an HJB table file (bad magic)");
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (detail::crc32_of(bytes.data(), bytes.size() - 4) != stored)
        throw InvalidInput("table file checksum mismatch");

    detail::ByteReader r(bytes);
    for (std::size_t i = 0; i < sizeof(kTableMagic); ++i) r.get<char>();
    if (r.get<std::uint32_t>() != kTableVersion) throw InvalidInput("unsupported table file version");
    HJBTable t;
    auto& g = t.grid;
    g.horizon = r.get<double>();
    g.n_time = r.get<std::int64_t>();
    g.q_min = r.get<double>();
    g.q_max = r.get<double>();
    g.dq = r.get<double>();
    g.f_min = r.get<double>();
    g.f_max = r.get<double>();
    g.n_f = r.get<std::int64_t>();
    auto& p = t.params;
    p.ou_cash.kappa = r.get<double>();
    p.ou_cash.theta = r.get<double>();
    p.ou_cash.sigma = r.get<double>();
    p.fill.lambda0 = r.get<double>();
    p.fill.k = r.get<double>();
    p.fill.delta_min = r.get<double>();
    p.alpha = r.get<double>();
    p.phi = r.get<double>();
    g.validate();
    const auto count = r.get<std::uint64_t>();
    const auto expected = static_cast<std::uint64_t>(g.n_q() * g.n_f * (g.n_time + 1));
    if (count != expected) throw InvalidInput("table file: value count does not match grid");
    if (r.pos() + count * sizeof(double) + 4 != bytes.size()) throw InvalidInput("table file: bad length");
    t.theta.resize(count);
    std::memcpy(t.theta.data(), bytes.data() + r.pos(), count * sizeof(double));
    return t;
}

inline std::uint32_t table_checksum(const std::vector<unsigned char>& bytes) {
    std::uint32_t stored = 0;
    if (bytes.size() >= 4) std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    return stored;
}

inline void write_table(const HJBTable& t, const std::string& path) {
    const auto bytes = serialize_table(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RuntimeFailure("failed writing " + path);
}

inline HJBTable read_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open table file " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_table(bytes);
}

}  // namespace fundmm
