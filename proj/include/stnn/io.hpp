#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stnn/baselines.hpp"
#include "stnn/dynsys.hpp"
#include "stnn/network.hpp"

namespace stnn {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV helpers. Doubles are printed with %.17g so round trips are lossless
// and output bytes are reproducible.
// ---------------------------------------------------------------------------

inline std::string format_double(double v, int precision = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const std::size_t dim = traj.states.empty() ? 0 : traj.states.front().size();
    out << "t";
    for (std::size_t d = 0; d < dim; ++d) out << ",x" << (d + 1);
    out << "\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        out << format_double(traj.times[k]);
        for (std::size_t d = 0; d < dim; ++d) out << "," << format_double(traj.states[k][d]);
        out << "\n";
    }
}

inline Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty trajectory file: " + path);
    Trajectory traj;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() < 2) throw std::runtime_error("bad trajectory row in " + path);
        traj.times.push_back(row[0]);
        traj.states.emplace_back(row.begin() + 1, row.end());
    }
    if (!traj.states.empty()) traj.initial_condition = traj.states.front();
    return traj;
}

/// Snapshot pairs as CSV: header in1..inN,out1..outN, one pair per row.
inline void write_pairs_csv(const std::string& path, const TrajectoryDataset& ds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const std::size_t dim = ds.inputs.rows;
    for (std::size_t d = 0; d < dim; ++d) out << (d ? "," : "") << "in" << (d + 1);
    for (std::size_t d = 0; d < dim; ++d) out << ",out" << (d + 1);
    out << "\n";
    for (std::size_t c = 0; c < ds.size(); ++c) {
        for (std::size_t d = 0; d < dim; ++d)
            out << (d ? "," : "") << format_double(ds.inputs(d, c));
        for (std::size_t d = 0; d < dim; ++d) out << "," << format_double(ds.outputs(d, c));
        out << "\n";
    }
}

inline TrajectoryDataset read_pairs_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty pairs file: " + path);
    std::size_t n_cols = 1;
    for (char c : line)
        if (c == ',') ++n_cols;
    if (n_cols % 2 != 0) throw std::runtime_error("pairs file must have in/out column pairs");
    const std::size_t dim = n_cols / 2;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != n_cols) throw std::runtime_error("ragged row in " + path);
        rows.push_back(std::move(row));
    }
    TrajectoryDataset ds;
    ds.inputs = DenseMatrix(dim, rows.size());
    ds.outputs = DenseMatrix(dim, rows.size());
    for (std::size_t c = 0; c < rows.size(); ++c)
        for (std::size_t d = 0; d < dim; ++d) {
            ds.inputs(d, c) = rows[c][d];
            ds.outputs(d, c) = rows[c][dim + d];
        }
    return ds;
}

inline void write_matrix_csv(const std::string& path, const DenseMatrix& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j)
            out << (j ? "," : "") << format_double(m(i, j));
        out << "\n";
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

// ---------------------------------------------------------------------------
// Model checkpoints. The structured-network checkpoint stores the flat
// parameter array in the canonical branch-major order.
// ---------------------------------------------------------------------------

inline json activations_to_json(const std::array<Activation, 4>& acts) {
    json arr = json::array();
    for (const auto& a : acts) arr.push_back(a.name());
    return arr;
}

inline std::array<Activation, 4> activations_from_json(const json& arr) {
    if (!arr.is_array() || arr.size() != 4)
        throw std::invalid_argument("activations: expected an array of 4 names");
    std::array<Activation, 4> acts;
    for (int i = 0; i < 4; ++i) acts[i] = Activation::parse(arr[i].get<std::string>());
    return acts;
}

inline json stnn_to_json(const StnnParams& params) {
    json j;
    j["model"] = "stnn";
    j["n"] = params.config.n;
    j["p"] = params.config.p;
    j["activations"] = activations_to_json(params.config.activations);
    j["alpha"] = params.config.alpha;
    j["seed"] = params.config.seed;
    j["parameter_order"] = "branch-major: layer1 weights, bias1, dhat, layer2 weights, "
                           "bias2, bias3, dout, bias4";
    j["parameters"] = flatten(params);
    return j;
}

inline StnnParams stnn_from_json(const json& j) {
    if (j.value("model", "") != "stnn") throw std::invalid_argument("not an stnn checkpoint");
    StnnConfig cfg;
    cfg.n = j.value("n", 4);
    cfg.p = j.at("p").get<int>();
    cfg.activations = activations_from_json(j.at("activations"));
    auto alpha = j.at("alpha").get<std::vector<double>>();
    if (alpha.size() != 4) throw std::invalid_argument("alpha must have 4 entries");
    for (int i = 0; i < 4; ++i) cfg.alpha[i] = alpha[i];
    cfg.seed = j.value("seed", 0ull);
    cfg.validate();
    StnnParams params;
    params.config = cfg;
    params.branches.resize(cfg.p);
    auto flat = j.at("parameters").get<std::vector<double>>();
    unflatten(flat, params);
    return params;
}

inline json ffnn_to_json(const FfnnParams& params) {
    json j;
    j["model"] = "ffnn";
    j["layer_sizes"] = params.config.layer_sizes;
    j["activations"] = activations_to_json(params.config.activations);
    j["alpha"] = params.config.alpha;
    j["seed"] = params.config.seed;
    j["parameters"] = detail::ffnn_flatten(params);
    return j;
}

inline FfnnParams ffnn_from_json(const json& j) {
    if (j.value("model", "") != "ffnn") throw std::invalid_argument("not an ffnn checkpoint");
    FfnnConfig cfg;
    cfg.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    cfg.activations = activations_from_json(j.at("activations"));
    auto alpha = j.at("alpha").get<std::vector<double>>();
    for (int i = 0; i < 4; ++i) cfg.alpha[i] = alpha[i];
    cfg.seed = j.value("seed", 0ull);
    FfnnParams params = ffnn_init(cfg);
    detail::ffnn_unflatten(j.at("parameters").get<std::vector<double>>(), params);
    return params;
}

inline json matrix_to_json(const DenseMatrix& m) {
    json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["data"] = m.data;
    return j;
}

inline DenseMatrix matrix_from_json(const json& j) {
    DenseMatrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw std::invalid_argument("matrix data size mismatch");
    return m;
}

inline json dmd_to_json(const DmdModel& model) {
    json j;
    j["model"] = "dmd";
    j["rank"] = model.rank;
    j["a"] = matrix_to_json(model.a);
    if (model.modes.rows > 0) {
        j["modes"] = matrix_to_json(model.modes);
        j["atilde"] = matrix_to_json(model.atilde);
    }
    return j;
}

inline DmdModel dmd_from_json(const json& j) {
    if (j.value("model", "") != "dmd") throw std::invalid_argument("not a dmd checkpoint");
    DmdModel model;
    model.rank = j.at("rank").get<std::size_t>();
    model.a = matrix_from_json(j.at("a"));
    if (j.contains("modes")) {
        model.modes = matrix_from_json(j.at("modes"));
        model.atilde = matrix_from_json(j.at("atilde"));
    }
    return model;
}

inline json sindy_to_json(const SindyModel& model) {
    json j;
    j["model"] = "sindy";
    j["library"] = sindy_library_names();
    j["threshold"] = model.threshold;
    j["xi"] = matrix_to_json(model.xi);
    return j;
}

inline SindyModel sindy_from_json(const json& j) {
    if (j.value("model", "") != "sindy") throw std::invalid_argument("not a sindy checkpoint");
    SindyModel model;
    model.threshold = j.at("threshold").get<double>();
    model.xi = matrix_from_json(j.at("xi"));
    return model;
}

inline json havok_to_json(const HavokModel& model) {
    json j;
    j["model"] = "havok";
    j["q"] = model.q;
    j["rank"] = model.rank;
    j["u"] = matrix_to_json(model.u);
    j["sigma"] = model.sigma;
    j["m"] = matrix_to_json(model.m);
    return j;
}

inline HavokModel havok_from_json(const json& j) {
    if (j.value("model", "") != "havok") throw std::invalid_argument("not a havok checkpoint");
    HavokModel model;
    model.q = j.at("q").get<std::size_t>();
    model.rank = j.at("rank").get<std::size_t>();
    model.u = matrix_from_json(j.at("u"));
    model.sigma = j.at("sigma").get<std::vector<double>>();
    model.m = matrix_from_json(j.at("m"));
    return model;
}

} // namespace stnn
