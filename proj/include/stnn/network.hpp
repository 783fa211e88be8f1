#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/dynsys.hpp"
#include "stnn/flops.hpp"
#include "stnn/linalg.hpp"
#include "stnn/lm.hpp"
#include "stnn/rng.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class ActKind { tanh_fn, sigmoid, leaky_relu, relu, identity };

struct Activation {
    ActKind kind = ActKind::identity;
    double slope = 0.01; // leaky_relu only

    double eval(double x) const {
        switch (kind) {
            case ActKind::tanh_fn: return std::tanh(x);
            case ActKind::sigmoid: return 1.0 / (1.0 + std::exp(-x));
            case ActKind::leaky_relu: return x >= 0.0 ? x : slope * x;
            case ActKind::relu: return x >= 0.0 ? x : 0.0;
            case ActKind::identity: return x;
        }
        return x;
    }

    /// Derivative from the (pre, post) pair saved on the forward pass.
    double deriv(double pre, double post) const {
        switch (kind) {
            case ActKind::tanh_fn: return 1.0 - post * post;
            case ActKind::sigmoid: return post * (1.0 - post);
            case ActKind::leaky_relu: return pre >= 0.0 ? 1.0 : slope;
            case ActKind::relu: return pre >= 0.0 ? 1.0 : 0.0;
            case ActKind::identity: return 1.0;
        }
        return 1.0;
    }

    std::string name() const {
        switch (kind) {
            case ActKind::tanh_fn: return "tanh";
            case ActKind::sigmoid: return "sigmoid";
            case ActKind::leaky_relu: return "leaky_relu";
            case ActKind::relu: return "relu";
            case ActKind::identity: return "identity";
        }
        return "identity";
    }

    static Activation parse(const std::string& s) {
        if (s == "tanh") return {ActKind::tanh_fn};
        if (s == "sigmoid") return {ActKind::sigmoid};
        if (s == "leaky_relu") return {ActKind::leaky_relu, 0.01};
        if (s == "relu") return {ActKind::relu};
        if (s == "identity") return {ActKind::identity};
        throw std::invalid_argument("unknown activation: " + s);
    }
};

// ---------------------------------------------------------------------------
// Configuration and parameters
//
// The network realizes four structured weight layers with p parallel
// branches. Per branch and structured layer, an 8 x 8 butterfly-style
// factorization F8 = P8^T blkdiag(F4, F4) H8 is built from two trainable
// 2 x 2 blocks (each F4 reuses one twice), the 4-entry diagonal of H8, and
// one 2-entry H4 diagonal per F4 block. Identities, zeros, permutations and
// the anti-identity are frozen by construction: they are never stored as
// trainables. Total trainables: 64 per branch.
// ---------------------------------------------------------------------------

struct StnnConfig {
    int n = 4; // state width; the structured layers are built for n = 4
    int p = 6; // parallel branches
    std::array<Activation, 4> activations{Activation{ActKind::tanh_fn},
                                          Activation{ActKind::leaky_relu, 0.01},
                                          Activation{ActKind::relu},
                                          Activation{ActKind::identity}};
    std::array<double, 4> alpha{0.0, 1e-7, 0.0, 0.0}; // per-layer nuclear-norm weights
    std::uint64_t seed = 0;

    void validate() const {
        if (n != 4)
            throw std::invalid_argument("StnnConfig: the structured layers are built for n = 4");
        if (p < 1) throw std::invalid_argument("StnnConfig: p >= 1");
        for (double a : alpha)
            if (a < 0.0) throw std::invalid_argument("StnnConfig: alpha entries must be >= 0");
    }
};

/// One F8 factorization: 16 trainable scalars.
struct StructuredWeights {
    std::array<double, 4> f2_first{};  // 2x2 block shared inside the first F4 (row-major)
    std::array<double, 4> f2_second{}; // 2x2 block shared inside the second F4
    std::array<double, 4> h8_diag{};   // diagonal of H8's lower block
    std::array<double, 2> h4_first{};  // H4 diagonal inside the first F4
    std::array<double, 2> h4_second{}; // H4 diagonal inside the second F4
};

struct BranchParams {
    StructuredWeights layer1;     // 16
    std::array<double, 8> bias1{};
    std::array<double, 8> dhat{}; // layer-2 D^ diagonal
    StructuredWeights layer2;     // 16
    std::array<double, 4> bias2{};
    std::array<double, 4> bias3{}; // layer 3 carries only a bias (anti-identity frozen)
    std::array<double, 4> dout{};  // layer-4 output diagonal
    std::array<double, 4> bias4{};
};

inline constexpr std::size_t kParamsPerBranch = 64;

struct StnnParams {
    StnnConfig config;
    std::vector<BranchParams> branches;

    std::size_t count() const { return kParamsPerBranch * branches.size(); }
};

/// Closed-form accounting for the four structured layers.
inline std::size_t count_params(const StnnConfig& cfg) {
    return 64 * static_cast<std::size_t>(cfg.p);
}
inline std::size_t count_flops(const StnnConfig& cfg) {
    return 148 * static_cast<std::size_t>(cfg.p) - 4;
}
inline std::size_t count_params(const StnnParams& params) { return params.count(); }

// Canonical flat layout, branch-major: for each branch
//   [f2_first, f2_second, h8_diag, h4_first, h4_second, bias1,
//    dhat, f2_first2, f2_second2, h8_diag2, h4_first2, h4_second2, bias2,
//    bias3, dout, bias4]
namespace detail {

inline void flatten_branch(const BranchParams& b, double* out) {
    std::size_t k = 0;
    auto put = [&](const double* src, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i) out[k++] = src[i];
    };
    put(b.layer1.f2_first.data(), 4);
    put(b.layer1.f2_second.data(), 4);
    put(b.layer1.h8_diag.data(), 4);
    put(b.layer1.h4_first.data(), 2);
    put(b.layer1.h4_second.data(), 2);
    put(b.bias1.data(), 8);
    put(b.dhat.data(), 8);
    put(b.layer2.f2_first.data(), 4);
    put(b.layer2.f2_second.data(), 4);
    put(b.layer2.h8_diag.data(), 4);
    put(b.layer2.h4_first.data(), 2);
    put(b.layer2.h4_second.data(), 2);
    put(b.bias2.data(), 4);
    put(b.bias3.data(), 4);
    put(b.dout.data(), 4);
    put(b.bias4.data(), 4);
}

inline void unflatten_branch(const double* in, BranchParams& b) {
    std::size_t k = 0;
    auto get = [&](double* dst, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i) dst[i] = in[k++];
    };
    get(b.layer1.f2_first.data(), 4);
    get(b.layer1.f2_second.data(), 4);
    get(b.layer1.h8_diag.data(), 4);
    get(b.layer1.h4_first.data(), 2);
    get(b.layer1.h4_second.data(), 2);
    get(b.bias1.data(), 8);
    get(b.dhat.data(), 8);
    get(b.layer2.f2_first.data(), 4);
    get(b.layer2.f2_second.data(), 4);
    get(b.layer2.h8_diag.data(), 4);
    get(b.layer2.h4_first.data(), 2);
    get(b.layer2.h4_second.data(), 2);
    get(b.bias2.data(), 4);
    get(b.bias3.data(), 4);
    get(b.dout.data(), 4);
    get(b.bias4.data(), 4);
}

inline const char* branch_field_name(std::size_t offset) {
    if (offset < 4) return "layer1.f2_first";
    if (offset < 8) return "layer1.f2_second";
    if (offset < 12) return "layer1.h8_diag";
    if (offset < 14) return "layer1.h4_first";
    if (offset < 16) return "layer1.h4_second";
    if (offset < 24) return "bias1";
    if (offset < 32) return "dhat";
    if (offset < 36) return "layer2.f2_first";
    if (offset < 40) return "layer2.f2_second";
    if (offset < 44) return "layer2.h8_diag";
    if (offset < 46) return "layer2.h4_first";
    if (offset < 48) return "layer2.h4_second";
    if (offset < 52) return "bias2";
    if (offset < 56) return "bias3";
    if (offset < 60) return "dout";
    return "bias4";
}

} // namespace detail

inline std::vector<double> flatten(const StnnParams& p) {
    std::vector<double> out(p.count());
    for (std::size_t b = 0; b < p.branches.size(); ++b)
        detail::flatten_branch(p.branches[b], out.data() + b * kParamsPerBranch);
    return out;
}

inline void unflatten(const std::vector<double>& flat, StnnParams& p) {
    if (flat.size() != p.count()) throw std::invalid_argument("unflatten: size mismatch");
    for (std::size_t b = 0; b < p.branches.size(); ++b)
        detail::unflatten_branch(flat.data() + b * kParamsPerBranch, p.branches[b]);
}

inline std::string param_block_name(std::size_t flat_index) {
    const std::size_t branch = flat_index / kParamsPerBranch;
    const std::size_t offset = flat_index % kParamsPerBranch;
    return "branch " + std::to_string(branch) + " " + detail::branch_field_name(offset);
}

/// Seeded initialization: every trainable scalar is uniform in
/// (-1/sqrt(fan_in), 1/sqrt(fan_in)) of its enclosing sub-matrix.
inline StnnParams init(const StnnConfig& cfg) {
    cfg.validate();
    StnnParams params;
    params.config = cfg;
    params.branches.resize(cfg.p);
    for (int b = 0; b < cfg.p; ++b) {
        Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(b));
        auto draw = [&](double* dst, std::size_t len, double fan_in) {
            const double bound = 1.0 / std::sqrt(fan_in);
            for (std::size_t i = 0; i < len; ++i) dst[i] = rng.uniform(-bound, bound);
        };
        BranchParams& br = params.branches[b];
        auto draw_structured = [&](StructuredWeights& w) {
            draw(w.f2_first.data(), 4, 2.0);
            draw(w.f2_second.data(), 4, 2.0);
            draw(w.h8_diag.data(), 4, 4.0);
            draw(w.h4_first.data(), 2, 2.0);
            draw(w.h4_second.data(), 2, 2.0);
        };
        draw_structured(br.layer1);
        draw(br.bias1.data(), 8, 4.0);  // layer input width n = 4
        draw(br.dhat.data(), 8, 8.0);
        draw_structured(br.layer2);
        draw(br.bias2.data(), 4, 8.0);  // layer input width r = 8
        draw(br.bias3.data(), 4, 4.0);
        draw(br.dout.data(), 4, 4.0);
        draw(br.bias4.data(), 4, 4.0);
    }
    return params;
}

// ---------------------------------------------------------------------------
// Structured transform F8 = P8^T blkdiag(F4, F4) H8
// ---------------------------------------------------------------------------

namespace detail {

struct F4Trace {
    std::array<double, 2> a{};    // z_top + z_bot
    std::array<double, 2> bsub{}; // z_top - z_bot
    std::array<double, 2> bb{};   // h4 diag * bsub
};

struct F8Trace {
    std::array<double, 4> sum{};  // v_top + v_bot
    std::array<double, 4> diff{}; // v_top - v_bot
    std::array<double, 4> dd{};   // h8 diag * diff
    F4Trace f4[2];
};

inline void f4_apply(const std::array<double, 4>& f2, const std::array<double, 2>& d2,
                     const double z[4], double out[4], F4Trace& tr, FlopCounter* fc) {
    tr.a[0] = z[0] + z[2];
    tr.a[1] = z[1] + z[3];
    tr.bsub[0] = z[0] - z[2];
    tr.bsub[1] = z[1] - z[3];
    tr.bb[0] = d2[0] * tr.bsub[0];
    tr.bb[1] = d2[1] * tr.bsub[1];
    const double ct0 = f2[0] * tr.a[0] + f2[1] * tr.a[1];
    const double ct1 = f2[2] * tr.a[0] + f2[3] * tr.a[1];
    const double cb0 = f2[0] * tr.bb[0] + f2[1] * tr.bb[1];
    const double cb1 = f2[2] * tr.bb[0] + f2[3] * tr.bb[1];
    // P4^T interleaves the halves.
    out[0] = ct0;
    out[1] = cb0;
    out[2] = ct1;
    out[3] = cb1;
    if (fc) {
        fc->add_vector_add(2);
        fc->add_vector_add(2);
        fc->add_diagonal_matvec(2);
        fc->add_dense_matvec(2, 2);
        fc->add_dense_matvec(2, 2);
    }
}

inline void f8_apply(const StructuredWeights& w, const double in[8], double out[8], F8Trace& tr,
                     FlopCounter* fc) {
    for (int i = 0; i < 4; ++i) {
        tr.sum[i] = in[i] + in[i + 4];
        tr.diff[i] = in[i] - in[i + 4];
        tr.dd[i] = w.h8_diag[i] * tr.diff[i];
    }
    if (fc) {
        fc->add_vector_add(4);
        fc->add_vector_add(4);
        fc->add_diagonal_matvec(4);
    }
    double top[4], bot[4];
    f4_apply(w.f2_first, w.h4_first, tr.sum.data(), top, tr.f4[0], fc);
    f4_apply(w.f2_second, w.h4_second, tr.dd.data(), bot, tr.f4[1], fc);
    // P8^T interleaves the halves.
    for (int k = 0; k < 4; ++k) {
        out[2 * k] = top[k];
        out[2 * k + 1] = bot[k];
    }
}

struct F4Grads {
    std::array<double, 4> f2{};
    std::array<double, 2> d2{};
};

struct F8Grads {
    F4Grads f4[2];
    std::array<double, 4> h8_diag{};
};

inline void f4_backward(const std::array<double, 4>& f2, const std::array<double, 2>& d2,
                        const F4Trace& tr, const double gout[4], double gin[4], F4Grads& g) {
    // undo P4^T
    const double gct0 = gout[0], gcb0 = gout[1], gct1 = gout[2], gcb1 = gout[3];
    g.f2[0] += gct0 * tr.a[0] + gcb0 * tr.bb[0];
    g.f2[1] += gct0 * tr.a[1] + gcb0 * tr.bb[1];
    g.f2[2] += gct1 * tr.a[0] + gcb1 * tr.bb[0];
    g.f2[3] += gct1 * tr.a[1] + gcb1 * tr.bb[1];
    const double ga0 = f2[0] * gct0 + f2[2] * gct1;
    const double ga1 = f2[1] * gct0 + f2[3] * gct1;
    const double gbb0 = f2[0] * gcb0 + f2[2] * gcb1;
    const double gbb1 = f2[1] * gcb0 + f2[3] * gcb1;
    g.d2[0] += gbb0 * tr.bsub[0];
    g.d2[1] += gbb1 * tr.bsub[1];
    const double gbsub0 = d2[0] * gbb0;
    const double gbsub1 = d2[1] * gbb1;
    gin[0] = ga0 + gbsub0;
    gin[1] = ga1 + gbsub1;
    gin[2] = ga0 - gbsub0;
    gin[3] = ga1 - gbsub1;
}

inline void f8_backward(const StructuredWeights& w, const F8Trace& tr, const double gout[8],
                        double gin[8], F8Grads& g) {
    double gtop[4], gbot[4];
    for (int k = 0; k < 4; ++k) {
        gtop[k] = gout[2 * k];
        gbot[k] = gout[2 * k + 1];
    }
    double gsum[4], gdd[4];
    f4_backward(w.f2_first, w.h4_first, tr.f4[0], gtop, gsum, g.f4[0]);
    f4_backward(w.f2_second, w.h4_second, tr.f4[1], gbot, gdd, g.f4[1]);
    for (int i = 0; i < 4; ++i) {
        g.h8_diag[i] += gdd[i] * tr.diff[i];
        const double gdiff = w.h8_diag[i] * gdd[i];
        gin[i] = gsum[i] + gdiff;
        gin[i + 4] = gsum[i] - gdiff;
    }
}

struct BranchTrace {
    F8Trace f8_1;
    std::array<double, 8> pre1{}, a1{};
    std::array<double, 8> t8{};
    F8Trace f8_2;
    std::array<double, 8> u8{};
    std::array<double, 4> pre2{}, a2{};
    std::array<double, 4> pre3{}, a3{};
};

/// Forward through one branch; fills the trace needed for backprop.
/// Layer 1: sigma1(F8 J x + b1); layer 2: sigma2(J^T F8 D^ a1 + b2);
/// layer 3: sigma3(I~ a2 + b3); the branch contribution D a3 + b4 is summed
/// by the caller.
inline void branch_forward(const BranchParams& br, const std::array<Activation, 4>& act,
                           const double x[4], BranchTrace& tr, double contrib[4],
                           FlopCounter* fc) {
    double v8[8] = {x[0], x[1], x[2], x[3], 0.0, 0.0, 0.0, 0.0}; // J pad, free
    double f8out[8];
    f8_apply(br.layer1, v8, f8out, tr.f8_1, fc);
    for (int i = 0; i < 8; ++i) {
        tr.pre1[i] = f8out[i] + br.bias1[i];
        tr.a1[i] = act[0].eval(tr.pre1[i]);
    }
    if (fc) fc->add_bias(8);

    for (int i = 0; i < 8; ++i) tr.t8[i] = br.dhat[i] * tr.a1[i];
    if (fc) fc->add_diagonal_matvec(8);
    double u8[8];
    f8_apply(br.layer2, tr.t8.data(), u8, tr.f8_2, fc);
    for (int i = 0; i < 8; ++i) tr.u8[i] = u8[i];
    for (int i = 0; i < 4; ++i) { // J^T selection, free
        tr.pre2[i] = u8[i] + br.bias2[i];
        tr.a2[i] = act[1].eval(tr.pre2[i]);
    }
    if (fc) fc->add_bias(4);

    for (int i = 0; i < 4; ++i) { // anti-identity, free
        tr.pre3[i] = tr.a2[3 - i] + br.bias3[i];
        tr.a3[i] = act[2].eval(tr.pre3[i]);
    }
    if (fc) fc->add_bias(4);

    for (int i = 0; i < 4; ++i) contrib[i] = br.dout[i] * tr.a3[i] + br.bias4[i];
    if (fc) {
        fc->add_diagonal_matvec(4);
        fc->add_bias(4);
    }
}

/// Gradient of branch output coordinate k with respect to the branch's 64
/// trainables, premultiplied by `g` (the upstream gradient at contrib[k]).
/// Writes into grad[0..63] laid out in the canonical flat order.
inline void branch_backward(const BranchParams& br, const std::array<Activation, 4>& act,
                            const BranchTrace& tr, int k, double g, double grad[64]) {
    // contrib[k] = dout[k] * a3[k] + bias4[k]
    grad[56 + k] += g * tr.a3[k]; // dout
    grad[60 + k] += g;            // bias4

    const double ga3 = g * br.dout[k];
    const double gpre3 = ga3 * act[2].deriv(tr.pre3[k], tr.a3[k]);
    grad[52 + k] += gpre3; // bias3

    // pre3[k] = a2[3-k] + bias3[k]
    const int j = 3 - k;
    const double gpre2 = gpre3 * act[1].deriv(tr.pre2[j], tr.a2[j]);
    grad[48 + j] += gpre2; // bias2

    // pre2[j] = u8[j] + bias2[j]; u8 = F8_2 t8, selected through J^T
    double gu8[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    gu8[j] = gpre2;
    double gt8[8];
    F8Grads g2;
    f8_backward(br.layer2, tr.f8_2, gu8, gt8, g2);
    for (int i = 0; i < 4; ++i) {
        grad[32 + i] += g2.f4[0].f2[i]; // layer2.f2_first
        grad[36 + i] += g2.f4[1].f2[i]; // layer2.f2_second
        grad[40 + i] += g2.h8_diag[i];  // layer2.h8_diag
    }
    grad[44] += g2.f4[0].d2[0];
    grad[45] += g2.f4[0].d2[1];
    grad[46] += g2.f4[1].d2[0];
    grad[47] += g2.f4[1].d2[1];

    // t8 = dhat .* a1
    double ga1[8];
    for (int i = 0; i < 8; ++i) {
        grad[24 + i] += gt8[i] * tr.a1[i]; // dhat
        ga1[i] = gt8[i] * br.dhat[i];
    }

    double gpre1[8];
    for (int i = 0; i < 8; ++i) {
        gpre1[i] = ga1[i] * act[0].deriv(tr.pre1[i], tr.a1[i]);
        grad[16 + i] += gpre1[i]; // bias1
    }

    double gv8[8];
    F8Grads g1;
    f8_backward(br.layer1, tr.f8_1, gpre1, gv8, g1);
    for (int i = 0; i < 4; ++i) {
        grad[0 + i] += g1.f4[0].f2[i]; // layer1.f2_first
        grad[4 + i] += g1.f4[1].f2[i]; // layer1.f2_second
        grad[8 + i] += g1.h8_diag[i];  // layer1.h8_diag
    }
    grad[12] += g1.f4[0].d2[0];
    grad[13] += g1.f4[0].d2[1];
    grad[14] += g1.f4[1].d2[0];
    grad[15] += g1.f4[1].d2[1];
}

} // namespace detail

// ---------------------------------------------------------------------------
// Forward pass, accounting, loss
// ---------------------------------------------------------------------------

inline std::array<double, 4> forward(const StnnParams& params, const double x[4],
                                     FlopCounter* counter = nullptr) {
    const int p = params.config.p;
    std::array<double, 4> out{0.0, 0.0, 0.0, 0.0};
    detail::BranchTrace tr;
    double contrib[4];
    for (int b = 0; b < p; ++b) {
        detail::branch_forward(params.branches[b], params.config.activations, x, tr, contrib,
                               counter);
        if (b == 0) {
            for (int i = 0; i < 4; ++i) out[i] = contrib[i];
        } else {
            for (int i = 0; i < 4; ++i) out[i] += contrib[i];
            if (counter) counter->add_vector_add(4);
        }
    }
    const Activation& a4 = params.config.activations[3];
    for (int i = 0; i < 4; ++i) out[i] = a4.eval(out[i]);
    return out;
}

inline std::vector<double> forward(const StnnParams& params, const std::vector<double>& x,
                                   FlopCounter* counter = nullptr) {
    if (x.size() != 4) throw std::invalid_argument("forward: state width must be 4");
    auto out = forward(params, x.data(), counter);
    return {out[0], out[1], out[2], out[3]};
}

/// Materialized composite sub-weight matrix of one branch and layer:
/// layer 1 -> 8x4 (F8 J), layer 2 -> 4x8 (J^T F8 D^), layer 3 -> 4x4
/// anti-identity, layer 4 -> 4x4 diagonal.
inline DenseMatrix materialize_layer(const BranchParams& br, int layer) {
    detail::F8Trace tr;
    if (layer == 1) {
        DenseMatrix w(8, 4);
        for (int j = 0; j < 4; ++j) {
            double in[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            in[j] = 1.0;
            double out[8];
            detail::f8_apply(br.layer1, in, out, tr, nullptr);
            for (int i = 0; i < 8; ++i) w(i, j) = out[i];
        }
        return w;
    }
    if (layer == 2) {
        DenseMatrix w(4, 8);
        for (int j = 0; j < 8; ++j) {
            double in[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            in[j] = br.dhat[j];
            double out[8];
            detail::f8_apply(br.layer2, in, out, tr, nullptr);
            for (int i = 0; i < 4; ++i) w(i, j) = out[i];
        }
        return w;
    }
    if (layer == 3) {
        DenseMatrix w(4, 4);
        for (int i = 0; i < 4; ++i) w(i, 3 - i) = 1.0;
        return w;
    }
    if (layer == 4) {
        DenseMatrix w(4, 4);
        for (int i = 0; i < 4; ++i) w(i, i) = br.dout[i];
        return w;
    }
    throw std::invalid_argument("materialize_layer: layer must be 1..4");
}

/// Mean-squared data term plus per-layer nuclear-norm regularization summed
/// over branches: (1/(m n)) sum_j ||x'_j - forward(x_j)||^2
///               + sum_l alpha_l sum_b ||W_l[b]||_*.
inline double loss(const StnnParams& params, const DenseMatrix& inputs,
                   const DenseMatrix& outputs, const std::array<double, 4>& alpha) {
    if (inputs.cols == 0) throw std::invalid_argument("loss: empty batch");
    if (inputs.rows != 4 || outputs.rows != 4)
        throw std::invalid_argument("loss: batch rows must be 4");
    const std::size_t m = inputs.cols;
    double data = 0.0;
    double xcol[4];
    for (std::size_t c = 0; c < m; ++c) {
        for (int d = 0; d < 4; ++d) xcol[d] = inputs(d, c);
        auto pred = forward(params, xcol);
        for (int d = 0; d < 4; ++d) {
            const double e = outputs(d, c) - pred[d];
            data += e * e;
        }
    }
    data /= static_cast<double>(m) * 4.0;

    double reg = 0.0;
    for (int l = 1; l <= 4; ++l) {
        if (alpha[l - 1] == 0.0) continue;
        for (const auto& br : params.branches)
            reg += alpha[l - 1] * nuclear_norm(materialize_layer(br, l));
    }
    return data + reg;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct StnnTrainReport : TrainReport {};

namespace detail {

// Residual layout for one batch: m*4 data residuals scaled by 1/sqrt(m*n),
// then sqrt(alpha_l * sigma_i) rows for every layer with alpha_l > 0,
// branch-major. The data block's Jacobian is analytic; the regularization
// rows get central-difference columns over the parameters of their layer.
struct StnnLmProblem {
    const StnnConfig* cfg;
    const DenseMatrix* inputs;
    const DenseMatrix* outputs;

    std::vector<int> reg_layers() const {
        std::vector<int> layers;
        for (int l = 1; l <= 4; ++l)
            if (cfg->alpha[l - 1] > 0.0) layers.push_back(l);
        return layers;
    }

    void eval(const std::vector<double>& theta, const std::vector<std::size_t>& cols,
              std::vector<double>& r, DenseMatrix* jac) const {
        const int p = cfg->p;
        const std::size_t n_params = theta.size();
        StnnParams params;
        params.config = *cfg;
        params.branches.resize(p);
        unflatten(theta, params);

        const std::size_t m = cols.size();
        const double scale = 1.0 / std::sqrt(static_cast<double>(m) * 4.0);
        auto layers = reg_layers();
        const std::size_t n_reg = layers.size() * static_cast<std::size_t>(p) * 4;
        r.assign(m * 4 + n_reg, 0.0);
        if (jac) {
            *jac = DenseMatrix(m * 4 + n_reg, n_params);
        }

        std::vector<BranchTrace> traces(p);
        double contrib[4];
        double xcol[4];
        const Activation& a4 = cfg->activations[3];
        for (std::size_t idx = 0; idx < m; ++idx) {
            const std::size_t c = cols[idx];
            for (int d = 0; d < 4; ++d) xcol[d] = (*inputs)(d, c);
            double sum[4] = {0, 0, 0, 0};
            for (int b = 0; b < p; ++b) {
                branch_forward(params.branches[b], cfg->activations, xcol, traces[b], contrib,
                               nullptr);
                for (int i = 0; i < 4; ++i) sum[i] += contrib[i];
            }
            for (int k = 0; k < 4; ++k) {
                const double post = a4.eval(sum[k]);
                r[idx * 4 + k] = scale * (post - (*outputs)(k, c));
                if (jac) {
                    double* row = jac->row(idx * 4 + k);
                    const double g = scale * a4.deriv(sum[k], post);
                    for (int b = 0; b < p; ++b)
                        branch_backward(params.branches[b], cfg->activations, traces[b], k, g,
                                        row + b * kParamsPerBranch);
                }
            }
        }

        // Regularization rows: sqrt(alpha_l * sigma_i) of one (layer, branch)
        // composite matrix fills 4 consecutive rows.
        auto reg_rows = [&](const double* branch_flat, int layer, double alpha_l,
                            double out4[4]) {
            BranchParams br;
            unflatten_branch(branch_flat, br);
            SvdResult sv = svd(materialize_layer(br, layer));
            for (int i = 0; i < 4; ++i) {
                const double s = i < static_cast<int>(sv.S.size()) ? std::max(0.0, sv.S[i]) : 0.0;
                out4[i] = std::sqrt(alpha_l * s);
            }
        };
        auto layer_param_offsets = [](int l) -> std::pair<std::size_t, std::size_t> {
            if (l == 1) return {0, 16};   // layer-1 structured weights
            if (l == 2) return {24, 48};  // dhat + layer-2 structured weights
            if (l == 4) return {56, 60};  // dout
            return {0, 0};                // layer 3 is frozen
        };

        std::size_t row = m * 4;
        std::vector<double> th = theta;
        for (int l : layers) {
            const double a = cfg->alpha[l - 1];
            for (int b = 0; b < p; ++b, row += 4) {
                double base4[4];
                reg_rows(th.data() + b * kParamsPerBranch, l, a, base4);
                for (int i = 0; i < 4; ++i) r[row + i] = base4[i];
                if (!jac) continue;
                auto [lo, hi] = layer_param_offsets(l);
                double plus4[4], minus4[4];
                for (std::size_t off = lo; off < hi; ++off) {
                    const std::size_t k = b * kParamsPerBranch + off;
                    const double saved = th[k];
                    const double h = 1e-6 * std::max(1.0, std::abs(saved));
                    th[k] = saved + h;
                    reg_rows(th.data() + b * kParamsPerBranch, l, a, plus4);
                    th[k] = saved - h;
                    reg_rows(th.data() + b * kParamsPerBranch, l, a, minus4);
                    th[k] = saved;
                    for (int i = 0; i < 4; ++i)
                        (*jac)(row + i, k) = (plus4[i] - minus4[i]) / (2.0 * h);
                }
            }
        }

        if (jac) {
            for (std::size_t k = 0; k < jac->data.size(); ++k) {
                if (!std::isfinite(jac->data[k]))
                    throw std::runtime_error("train_lm: NaN in Jacobian at " +
                                             param_block_name(k % n_params));
            }
        }
    }
};

} // namespace detail

/// Mini-batched Levenberg-Marquardt training of the structured network.
/// Deterministic for a given config seed; accepted steps never increase the
/// batch objective (data term plus nuclear-norm residuals).
inline TrainReport train_lm(StnnParams& params, const TrajectoryDataset& train,
                            const TrajectoryDataset& val, const TrainOptions& opts) {
    std::vector<double> theta = flatten(params);
    detail::StnnLmProblem problem{&params.config, &train.inputs, &train.outputs};
    detail::StnnLmProblem val_problem{&params.config, &val.inputs, &val.outputs};

    std::vector<std::size_t> all_val(val.size());
    for (std::size_t i = 0; i < all_val.size(); ++i) all_val[i] = i;

    TrainReport report = lm_train_loop(
        theta,
        [&](const std::vector<double>& th, const std::vector<std::size_t>& cols,
            std::vector<double>& r, DenseMatrix* j) { problem.eval(th, cols, r, j); },
        [&](const std::vector<double>& th) {
            if (all_val.empty()) return 0.0;
            std::vector<double> r;
            val_problem.eval(th, all_val, r, nullptr);
            return detail::sum_squares(r);
        },
        train.size(), opts);

    unflatten(theta, params);
    return report;
}

// ---------------------------------------------------------------------------
// Autoregressive rollout
// ---------------------------------------------------------------------------

enum class RolloutMode {
    plain,          // feed the raw output back
    lorenz_padding, // reset the 4th (padding) coordinate to 0 each step
    lotka_volterra  // advance time by dt, hold the environment coordinate
};

struct RolloutResult {
    std::vector<std::array<double, 4>> states; // includes the initial state
    bool diverged = false;
    std::size_t diverged_step = 0;
};

inline RolloutResult rollout(const StnnParams& params, const std::array<double, 4>& x0,
                             std::size_t steps, RolloutMode mode = RolloutMode::plain,
                             double dt = 0.5) {
    if (steps < 1) throw std::invalid_argument("rollout: steps >= 1");
    RolloutResult res;
    res.states.reserve(steps + 1);
    res.states.push_back(x0);
    std::array<double, 4> x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        auto y = forward(params, x.data());
        if (mode == RolloutMode::lorenz_padding) {
            y[3] = 0.0;
        } else if (mode == RolloutMode::lotka_volterra) {
            y[2] = x[2] + dt;
            y[3] = x[3];
        }
        double mag = 0.0;
        for (double v : y) mag = std::max(mag, std::abs(v));
        if (!std::isfinite(mag) || mag > 1e6) {
            res.diverged = true;
            res.diverged_step = k + 1;
            break;
        }
        res.states.push_back(y);
        x = y;
    }
    return res;
}

} // namespace stnn
