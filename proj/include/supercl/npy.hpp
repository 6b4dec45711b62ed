#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/tensor.hpp"

// NPY v1.0 subset: little-endian '<f4'/'<f8', C order only. The writer pads
// the header with spaces so the total header size is a multiple of 64.

namespace supercl {

enum class NpyPrecision { f4, f8 };

namespace detail {

inline std::string npy_shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << shape[i];
        if (i + 1 < shape.size()) os << ", ";
    }
    if (shape.size() == 1) os << ',';
    os << ')';
    return os.str();
}

// Extracts the value following "'key':" in the header dict.
inline std::string npy_dict_value(const std::string& dict, const std::string& key) {
    const std::string pat = "'" + key + "':";
    const std::size_t kpos = dict.find(pat);
    if (kpos == std::string::npos)
        throw FormatError("npy header missing key '" + key + "'");
    std::size_t p = kpos + pat.size();
    while (p < dict.size() && dict[p] == ' ') ++p;
    if (p >= dict.size()) throw FormatError("npy header truncated after key '" + key + "'");
    if (dict[p] == '\'') {
        const std::size_t end = dict.find('\'', p + 1);
        if (end == std::string::npos) throw FormatError("npy header: unterminated string");
        return dict.substr(p + 1, end - p - 1);
    }
    if (dict[p] == '(') {
        const std::size_t end = dict.find(')', p);
        if (end == std::string::npos) throw FormatError("npy header: unterminated tuple");
        return dict.substr(p, end - p + 1);
    }
    std::size_t end = p;
    while (end < dict.size() && dict[end] != ',' && dict[end] != '}') ++end;
    std::string v = dict.substr(p, end - p);
    while (!v.empty() && v.back() == ' ') v.pop_back();
    return v;
}

inline std::vector<std::size_t> npy_parse_shape(const std::string& tuple) {
    if (tuple.size() < 2 || tuple.front() != '(' || tuple.back() != ')')
        throw FormatError("npy header: malformed shape tuple");
    std::vector<std::size_t> shape;
    std::size_t p = 1;
    const std::size_t stop = tuple.size() - 1;
    while (p < stop) {
        while (p < stop && (tuple[p] == ' ' || tuple[p] == ',')) ++p;
        if (p >= stop) break;
        if (!std::isdigit(static_cast<unsigned char>(tuple[p])))
            throw FormatError("npy header: non-numeric shape entry");
        std::size_t v = 0;
        while (p < stop && std::isdigit(static_cast<unsigned char>(tuple[p]))) {
            v = v * 10 + static_cast<std::size_t>(tuple[p] - '0');
            ++p;
        }
        shape.push_back(v);
    }
    return shape;
}

} // namespace detail

inline std::vector<std::uint8_t> write_npy(const Tensor& t, NpyPrecision prec = NpyPrecision::f8) {
    const bool f8 = prec == NpyPrecision::f8;
    std::string dict = "{'descr': '";
    dict += f8 ? "<f8" : "<f4";
    dict += "', 'fortran_order': False, 'shape': ";
    dict += detail::npy_shape_string(t.shape());
    dict += ", }";

    // magic(6) + version(2) + header_len(2) + dict + pad + '\n', total % 64 == 0
    std::size_t total = 10 + dict.size() + 1;
    const std::size_t pad = (64 - total % 64) % 64;
    dict.append(pad, ' ');
    dict.push_back('\n');

    std::vector<std::uint8_t> out;
    out.reserve(10 + dict.size() + t.numel() * (f8 ? 8 : 4));
    const char magic[] = "\x93NUMPY";
    out.insert(out.end(), magic, magic + 6);
    out.push_back(1);
    out.push_back(0);
    const std::uint16_t hlen = static_cast<std::uint16_t>(dict.size());
    out.push_back(static_cast<std::uint8_t>(hlen & 0xff));
    out.push_back(static_cast<std::uint8_t>(hlen >> 8));
    out.insert(out.end(), dict.begin(), dict.end());

    if (f8) {
        for (double v : t.data()) {
            std::uint8_t buf[8];
            std::memcpy(buf, &v, 8);
            out.insert(out.end(), buf, buf + 8);
        }
    } else {
        for (double v : t.data()) {
            const float f = static_cast<float>(v);
            std::uint8_t buf[4];
            std::memcpy(buf, &f, 4);
            out.insert(out.end(), buf, buf + 4);
        }
    }
    return out;
}

inline Tensor read_npy(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0)
        throw FormatError("npy: bad magic");
    if (bytes[6] != 1 || bytes[7] != 0)
        throw FormatError("npy: unsupported version");
    const std::size_t hlen = static_cast<std::size_t>(bytes[8]) | (static_cast<std::size_t>(bytes[9]) << 8);
    if (bytes.size() < 10 + hlen)
        throw TruncatedPayload("npy: truncated header");
    const std::string dict(bytes.begin() + 10, bytes.begin() + 10 + hlen);

    const std::string descr = detail::npy_dict_value(dict, "descr");
    if (descr != "<f4" && descr != "<f8")
        throw FormatError("npy: unsupported descr '" + descr + "'");
    const std::string order = detail::npy_dict_value(dict, "fortran_order");
    if (order != "False")
        throw FormatError("npy: fortran_order must be False");
    const std::vector<std::size_t> shape = detail::npy_parse_shape(detail::npy_dict_value(dict, "shape"));

    const std::size_t n = Tensor::count(shape);
    const std::size_t item = descr == "<f8" ? 8 : 4;
    const std::size_t offset = 10 + hlen;
    if (bytes.size() < offset + n * item)
        throw TruncatedPayload("npy: payload shorter than header shape requires");
    if (bytes.size() > offset + n * item)
        throw FormatError("npy: trailing bytes after payload");

    std::vector<double> data(n);
    const std::uint8_t* p = bytes.data() + offset;
    if (item == 8) {
        for (std::size_t i = 0; i < n; ++i, p += 8) {
            double v;
            std::memcpy(&v, p, 8);
            data[i] = v;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i, p += 4) {
            float v;
            std::memcpy(&v, p, 4);
            data[i] = static_cast<double>(v);
        }
    }
    return Tensor(shape, std::move(data));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FileError("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FileError("short write: " + path);
}

inline Tensor load_npy(const std::string& path) { return read_npy(read_file_bytes(path)); }

inline void save_npy(const std::string& path, const Tensor& t, NpyPrecision prec = NpyPrecision::f8) {
    write_file_bytes(path, write_npy(t, prec));
}

} // namespace supercl
