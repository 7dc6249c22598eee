#pragma once

// `.pgbt` tensor archive:
//   u64 little-endian header length | UTF-8 JSON manifest | raw payload
// manifest = {"tensors": [{"name", "shape", "dtype": "f32", "offset", ...extra}], ...meta}
// Offsets are relative to the start of the payload. Values are little-endian IEEE-754 binary32.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgb/errors.hpp"
#include "pgb/tensor.hpp"

namespace pgb {

using nlohmann::json;

struct TensorEntry {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::string dtype = "f32";
    std::uint64_t offset = 0;
    json extra = json::object();  ///< additional manifest keys carried verbatim

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
    std::uint64_t byte_size() const { return element_count() * 4; }
};

namespace detail {

inline void put_f32_le(std::vector<std::uint8_t>& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

inline float get_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
    return std::bit_cast<float>(bits);
}

} // namespace detail

class TensorArchive {
public:
    const std::vector<TensorEntry>& entries() const noexcept { return entries_; }
    const std::vector<std::uint8_t>& payload() const noexcept { return payload_; }

    /// Top-level manifest keys other than "tensors".
    json& meta() noexcept { return meta_; }
    const json& meta() const noexcept { return meta_; }

    const TensorEntry* find(std::string_view name) const {
        auto it = std::find_if(entries_.begin(), entries_.end(),
                               [&](const TensorEntry& e) { return e.name == name; });
        return it == entries_.end() ? nullptr : &*it;
    }

    bool contains(std::string_view name) const { return find(name) != nullptr; }

    const TensorEntry& at(std::string_view name) const {
        if (const auto* e = find(name)) return *e;
        throw FormatError("archive has no tensor named '" + std::string(name) + "'");
    }

    /// Appends raw f32 values under `name`.
    TensorEntry& add(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values,
                     json extra = json::object()) {
        if (contains(name)) throw ValidationError("duplicate tensor name '" + name + "'");
        TensorEntry e{std::move(name), std::move(shape), "f32", payload_.size(), std::move(extra)};
        if (e.element_count() != values.size()) {
            throw ShapeError("tensor '" + e.name + "' shape does not match value count");
        }
        payload_.reserve(payload_.size() + values.size() * 4);
        for (float v : values) detail::put_f32_le(payload_, v);
        entries_.push_back(std::move(e));
        return entries_.back();
    }

    template <typename T>
    TensorEntry& add_matrix(std::string name, const BasicMatrix<T>& m, json extra = json::object()) {
        std::vector<float> v(m.size());
        std::transform(m.data(), m.data() + m.size(), v.begin(), [](T x) { return static_cast<float>(x); });
        return add(std::move(name), {m.rows(), m.cols()}, v, std::move(extra));
    }

    template <typename T>
    TensorEntry& add_vector(std::string name, std::span<const T> values, json extra = json::object()) {
        std::vector<float> v(values.begin(), values.end());
        return add(std::move(name), {values.size()}, v, std::move(extra));
    }

    /// Zero-byte entry (shape [0]) used to mark removed tensors.
    TensorEntry& add_tombstone(std::string name, json extra) {
        extra["dropped"] = true;
        return add(std::move(name), {0}, std::span<const float>{}, std::move(extra));
    }

    std::vector<float> values(const TensorEntry& e) const {
        std::vector<float> out(e.element_count());
        const std::uint8_t* p = payload_.data() + e.offset;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_f32_le(p + 4 * i);
        return out;
    }

    std::vector<float> values(std::string_view name) const { return values(at(name)); }

    Matrix matrix(std::string_view name) const {
        const auto& e = at(name);
        if (e.shape.size() != 2) throw FormatError("tensor '" + e.name + "' is not 2-D");
        const auto v = values(e);
        return Matrix(e.shape[0], e.shape[1], std::vector<double>(v.begin(), v.end()));
    }

    std::vector<double> vector(std::string_view name) const {
        const auto& e = at(name);
        if (e.shape.size() != 1) throw FormatError("tensor '" + e.name + "' is not 1-D");
        const auto v = values(e);
        return {v.begin(), v.end()};
    }

    json manifest() const {
        json tensors = json::array();
        for (const auto& e : entries_) {
            json j = e.extra;
            j["name"] = e.name;
            j["shape"] = e.shape;
            j["dtype"] = e.dtype;
            j["offset"] = e.offset;
            tensors.push_back(std::move(j));
        }
        json m = meta_;
        m["tensors"] = std::move(tensors);
        return m;
    }

    std::vector<std::uint8_t> serialize() const {
        const std::string header = manifest().dump();
        std::vector<std::uint8_t> out;
        out.reserve(8 + header.size() + payload_.size());
        const std::uint64_t len = header.size();
        for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(len >> (8 * b)));
        out.insert(out.end(), header.begin(), header.end());
        out.insert(out.end(), payload_.begin(), payload_.end());
        return out;
    }

    static TensorArchive parse(std::span<const std::uint8_t> bytes) {
        if (bytes.size() < 8) throw FormatError("archive shorter than its 8-byte header length");
        std::uint64_t len = 0;
        for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        if (len > bytes.size() - 8) throw FormatError("manifest length exceeds file size");

        json m;
        try {
            m = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
        } catch (const json::parse_error& e) {
            throw FormatError(std::string("malformed manifest: ") + e.what());
        }
        if (!m.is_object() || !m.contains("tensors") || !m["tensors"].is_array()) {
            throw FormatError("malformed manifest: missing 'tensors' array");
        }

        TensorArchive a;
        a.payload_.assign(bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len), bytes.end());
        for (const auto& t : m["tensors"]) {
            if (!t.is_object() || !t.contains("name") || !t["name"].is_string() ||
                !t.contains("shape") || !t["shape"].is_array() ||
                !t.contains("dtype") || !t["dtype"].is_string() ||
                !t.contains("offset") || !t["offset"].is_number_unsigned()) {
                throw FormatError("malformed manifest entry: " + t.dump());
            }
            TensorEntry e;
            e.name = t["name"].get<std::string>();
            for (const auto& d : t["shape"]) {
                if (!d.is_number_unsigned()) throw FormatError("tensor '" + e.name + "' has a bad shape");
                e.shape.push_back(d.get<std::uint64_t>());
            }
            e.dtype = t["dtype"].get<std::string>();
            if (e.dtype != "f32") throw FormatError("tensor '" + e.name + "' has unknown dtype '" + e.dtype + "'");
            e.offset = t["offset"].get<std::uint64_t>();
            e.extra = t;
            for (const char* k : {"name", "shape", "dtype", "offset"}) e.extra.erase(k);
            a.entries_.push_back(std::move(e));
        }
        m.erase("tensors");
        a.meta_ = std::move(m);
        a.validate();
        return a;
    }

    /// Checks unique names and in-range, non-overlapping byte ranges.
    void validate() const {
        std::set<std::string_view> names;
        std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
        for (const auto& e : entries_) {
            if (!names.insert(e.name).second) throw FormatError("duplicate tensor name '" + e.name + "'");
            const auto n = e.byte_size();
            if (e.offset > payload_.size() || n > payload_.size() - e.offset) {
                throw FormatError("tensor '" + e.name + "' byte range is outside the payload");
            }
            if (n > 0) ranges.emplace_back(e.offset, e.offset + n);
        }
        std::sort(ranges.begin(), ranges.end());
        for (std::size_t i = 1; i < ranges.size(); ++i) {
            if (ranges[i].first < ranges[i - 1].second) throw FormatError("tensor byte ranges overlap");
        }
    }

private:
    std::vector<TensorEntry> entries_;
    std::vector<std::uint8_t> payload_;
    json meta_ = json::object();
};

inline void save_archive(const TensorArchive& a, const std::filesystem::path& path) {
    const auto bytes = a.serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

inline TensorArchive load_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return TensorArchive::parse(bytes);
}

} // namespace pgb
