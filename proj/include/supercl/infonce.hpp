#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "supercl/errors.hpp"
#include "supercl/positive_set.hpp"
#include "supercl/tensor.hpp"

namespace supercl {

struct LossWeights {
    double lambda1 = 1.0; // ins
    double lambda2 = 1.0; // intra
    double lambda3 = 0.5; // inter
    double tau = 0.1;
};

struct InfoNceResult {
    double loss = 0.0;
    Tensor grad;                // same shape as the projection matrix
    std::size_t skipped = 0;    // anchors with empty positive sets
};

// Supervised InfoNCE over rows of Z (n x C):
//
//   per anchor l with a nonempty positive set,
//     -(1/|P_l|) * sum_{j in P_l} log( exp(s_lj / tau) / sum_{k != l} exp(s_lk / tau) )
//   averaged over the anchors that contributed, s = cosine similarity.
//
// The gradient is the exact derivative through the cosine normalization.
// Logits are reduced with a max shift so the denominator cannot overflow.
inline InfoNceResult supervised_infonce(const Tensor& z, const PositiveSet& omega, double tau) {
    if (z.rank() != 2) throw ShapeError("supervised_infonce: Z must be n x C");
    const std::size_t n = z.dim(0);
    const std::size_t c = z.dim(1);
    if (omega.n != n) throw LengthMismatch("supervised_infonce: positive set size != rows(Z)");
    if (!(tau > 0.0)) throw ContractError("supervised_infonce: tau must be positive");
    if (n < 2) throw ShapeError("supervised_infonce: need at least two rows");

    const double* zp = z.ptr();

    std::vector<double> norm(n);
    std::vector<double> unit(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t d = 0; d < c; ++d) s += zp[i * c + d] * zp[i * c + d];
        norm[i] = std::sqrt(s);
        if (norm[i] == 0.0)
            throw ZeroVector("supervised_infonce: row " + std::to_string(i) + " has zero norm");
        const double inv = 1.0 / norm[i];
        for (std::size_t d = 0; d < c; ++d) unit[i * c + d] = zp[i * c + d] * inv;
    }

    // cos[i][j], clamped like cosine_similarity
    std::vector<double> cos(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double* ui = &unit[i * c];
            const double* uj = &unit[j * c];
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (std::size_t d = 0; d < c; ++d) s += ui[d] * uj[d];
            if (s > 1.0) s = 1.0;
            if (s < -1.0) s = -1.0;
            cos[i * n + j] = s;
            cos[j * n + i] = s;
        }
    }

    std::size_t active = 0;
    for (std::size_t l = 0; l < n; ++l)
        if (!omega.positives[l].empty()) ++active;
    if (active == 0)
        throw EmptyPositives("supervised_infonce: every anchor has an empty positive set");

    // g[l][k] = dL/d(cos[l][k]); accumulated per anchor below
    std::vector<double> g(n * n, 0.0);
    std::vector<double> prob(n);
    double loss = 0.0;
    const double inv_active = 1.0 / static_cast<double>(active);

    for (std::size_t l = 0; l < n; ++l) {
        const auto& pos = omega.positives[l];
        if (pos.empty()) continue;

        double mx = -1e300;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == l) continue;
            const double logit = cos[l * n + k] / tau;
            if (logit > mx) mx = logit;
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == l) { prob[k] = 0.0; continue; }
            prob[k] = std::exp(cos[l * n + k] / tau - mx);
            denom += prob[k];
        }
        const double log_denom = mx + std::log(denom);
        const double inv_denom = 1.0 / denom;
        for (std::size_t k = 0; k < n; ++k) prob[k] *= inv_denom;

        const double inv_p = 1.0 / static_cast<double>(pos.size());
        double term = 0.0;
        for (std::uint32_t j : pos)
            term -= cos[l * n + j] / tau - log_denom;
        loss += inv_active * inv_p * term;

        const double w = inv_active / tau;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == l) continue;
            g[l * n + k] = w * prob[k];
        }
        for (std::uint32_t j : pos)
            g[l * n + j] -= w * inv_p;
    }

    // Through the cosine: with u = z/|z| and b[i][k] = g[i][k] + g[k][i],
    //   dL/dz_i = (1/|z_i|) * ( sum_k b[i][k] u_k - (sum_k b[i][k] cos_ik) u_i )
    InfoNceResult res;
    res.loss = loss;
    res.skipped = n - active;
    res.grad = Tensor({n, c});
    double* gr = res.grad.ptr();
    for (std::size_t i = 0; i < n; ++i) {
        double self = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            const double b = g[i * n + k] + g[k * n + i];
            if (b == 0.0) continue;
            const double* uk = &unit[k * c];
            for (std::size_t d = 0; d < c; ++d) gr[i * c + d] += b * uk[d];
            self += b * cos[i * n + k];
        }
        const double inv = 1.0 / norm[i];
        const double* ui = &unit[i * c];
        for (std::size_t d = 0; d < c; ++d)
            gr[i * c + d] = inv * (gr[i * c + d] - self * ui[d]);
    }
    return res;
}

// Slice-position positives: samples i, j pair up when their normalized
// positions are within the threshold, lifted to 2B anchors.
inline PositiveSet positive_set_pcl(const std::vector<double>& positions, double threshold) {
    if (threshold < 0.0) throw ContractError("positive_set_pcl: threshold must be >= 0");
    const std::size_t b = positions.size();
    Tensor base({b, b});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j)
            if (i != j && std::abs(positions[i] - positions[j]) <= threshold)
                base.at(i, j) = 1.0;
    return lift_base_relation(base);
}

struct LossTerm {
    double value = 0.0;
    Tensor grad;
    std::size_t skipped = 0;
    bool present = false;

    LossTerm() = default;
    LossTerm(const InfoNceResult& r) : value(r.loss), grad(r.grad), skipped(r.skipped), present(true) {}
};

struct LossReport {
    double total = 0.0;
    LossTerm ins, intra, inter;
    LossWeights weights;
    Tensor grad_pixel;    // lambda2-scaled intra gradient
    Tensor grad_instance; // lambda1 * ins + lambda3 * inter gradients
};

// Eq-style weighted combination. Terms that were not evaluated contribute
// zero and keep their `present` flag false so reports can mark them.
inline LossReport total_loss(const LossTerm& ins, const LossTerm& intra, const LossTerm& inter,
                             const LossWeights& w) {
    LossReport r;
    r.ins = ins;
    r.intra = intra;
    r.inter = inter;
    r.weights = w;
    r.total = w.lambda1 * (ins.present ? ins.value : 0.0) +
              w.lambda2 * (intra.present ? intra.value : 0.0) +
              w.lambda3 * (inter.present ? inter.value : 0.0);

    if (intra.present) {
        r.grad_pixel = intra.grad;
        r.grad_pixel *= w.lambda2;
    }
    if (ins.present || inter.present) {
        if (ins.present && inter.present && !ins.grad.same_shape(inter.grad))
            throw ShapeError("total_loss: ins and inter gradients address different tensors");
        const Tensor& ref = ins.present ? ins.grad : inter.grad;
        r.grad_instance = Tensor(ref.shape());
        if (ins.present) r.grad_instance.axpy(w.lambda1, ins.grad);
        if (inter.present) r.grad_instance.axpy(w.lambda3, inter.grad);
    }
    return r;
}

inline double grad_norm(const Tensor& g) {
    double s = 0.0;
    for (double v : g.data()) s += v * v;
    return std::sqrt(s);
}

} // namespace supercl
