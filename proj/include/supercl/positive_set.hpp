#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

// Symmetric, irreflexive anchor -> positives relation over a concatenated
// two-view sample set. Providers: ILCP (superpixel clusters), the weak label
// W, and the slice-position rule.
struct PositiveSet {
    std::size_t n = 0;
    std::vector<std::vector<std::uint32_t>> positives;

    PositiveSet() = default;
    explicit PositiveSet(std::size_t n_) : n(n_), positives(n_) {}

    bool symmetric_irreflexive() const {
        if (positives.size() != n) return false;
        for (std::size_t a = 0; a < n; ++a) {
            if (!std::is_sorted(positives[a].begin(), positives[a].end())) return false;
            for (std::uint32_t j : positives[a]) {
                if (j == a || j >= n) return false;
                const auto& back = positives[j];
                if (!std::binary_search(back.begin(), back.end(), static_cast<std::uint32_t>(a)))
                    return false;
            }
        }
        return true;
    }

    std::size_t anchors_with_positives() const {
        std::size_t c = 0;
        for (const auto& p : positives)
            if (!p.empty()) ++c;
        return c;
    }
};

// Lifts a base B x B relation (symmetric, zero diagonal) to 2B anchors:
// anchors u, v are positive iff they are the two views of one sample or the
// base relation links their samples.
inline PositiveSet lift_base_relation(const Tensor& base) {
    if (base.rank() != 2 || base.dim(0) != base.dim(1))
        throw ShapeError("lift_base_relation: expected square matrix");
    const std::size_t b = base.dim(0);
    PositiveSet omega(2 * b);
    for (std::size_t u = 0; u < 2 * b; ++u) {
        const std::size_t bu = u % b;
        for (std::size_t v = 0; v < 2 * b; ++v) {
            if (v == u) continue;
            const std::size_t bv = v % b;
            if (bu == bv || base.at(bu, bv) != 0.0)
                omega.positives[u].push_back(static_cast<std::uint32_t>(v));
        }
    }
    return omega;
}

// Text form: one line per anchor, "index: p1 p2 ...".
inline std::string positive_set_to_text(const PositiveSet& omega) {
    std::ostringstream os;
    for (std::size_t a = 0; a < omega.n; ++a) {
        os << a << ':';
        for (std::uint32_t j : omega.positives[a]) os << ' ' << j;
        os << '\n';
    }
    return os.str();
}

inline PositiveSet positive_set_from_text(const std::string& text) {
    PositiveSet omega;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const std::size_t colon = line.find(':');
        if (colon == std::string::npos)
            throw FormatError("positive set: line without ':'");
        const std::size_t anchor = std::stoul(line.substr(0, colon));
        if (anchor != omega.positives.size())
            throw FormatError("positive set: anchors out of order");
        std::vector<std::uint32_t> ps;
        std::istringstream rest(line.substr(colon + 1));
        std::uint32_t v;
        while (rest >> v) ps.push_back(v);
        omega.positives.push_back(std::move(ps));
    }
    omega.n = omega.positives.size();
    for (const auto& ps : omega.positives)
        for (std::uint32_t j : ps)
            if (j >= omega.n) throw FormatError("positive set: index out of range");
    return omega;
}

} // namespace supercl
