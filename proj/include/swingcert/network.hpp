#pragma once

// Physical network and controller communication graph.
//
// Internally generator buses occupy indices [0, n_g) and load buses
// [n_g, n); `labels` maps every internal index back to the bus id used
// in the configuration document.

#include "swingcert/error.hpp"
#include "swingcert/linalg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace swingcert {

using Edge = std::pair<std::size_t, std::size_t>;

struct PowerNetwork {
    std::size_t n = 0;
    std::size_t n_g = 0;
    std::size_t n_l = 0;
    std::vector<int> labels;
    std::vector<Edge> edges;  // oriented (from, to), internal indices
    Mat incidence;            // n x m, +1 at `from`, -1 at `to`
    Vec gamma;                // m, B_ij V_i V_j
    Vec inertia;              // n_g
    Vec damping;              // n
    Vec load;                 // n, demand (+) or generation (-)

    [[nodiscard]] std::size_t num_edges() const { return edges.size(); }
    [[nodiscard]] Vec damping_g() const { return damping.head(n_g); }
    [[nodiscard]] Vec damping_l() const { return damping.tail(n_l); }
    /// Edge angle differences B^T delta.
    [[nodiscard]] Vec edge_angles(const Vec& delta) const { return incidence.transpose() * delta; }
};

struct ControllerSetup {
    Vec cost;  // diagonal of Q
    std::vector<Edge> comm_edges;
    Mat comm_laplacian;

    /// mu = 1^T Q^{-1} 1
    [[nodiscard]] double mu() const { return cost.cwiseInverse().sum(); }
};

struct NetworkModel {
    PowerNetwork net;
    ControllerSetup ctrl;
};

// ---------------------------------------------------------------------------
// Raw description, as read from a configuration document.

struct BusSpec {
    int id = 0;
    double voltage = 1.0;
    double inertia = 0.0;
    double damping = 0.0;
    double cost = 0.0;
    double load = 0.0;
};

struct LineSpec {
    int from = 0;
    int to = 0;
    double susceptance = 0.0;
};

struct NetworkDescription {
    std::vector<BusSpec> buses;
    std::vector<int> generators;
    std::vector<LineSpec> lines;
    std::vector<std::pair<int, int>> comm_edges;
};

// ---------------------------------------------------------------------------

inline Mat incidence_matrix(std::size_t n, const std::vector<Edge>& edges) {
    Mat b = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(edges.size()));
    for (std::size_t k = 0; k < edges.size(); ++k) {
        b(static_cast<Eigen::Index>(edges[k].first), static_cast<Eigen::Index>(k)) = 1.0;
        b(static_cast<Eigen::Index>(edges[k].second), static_cast<Eigen::Index>(k)) = -1.0;
    }
    return b;
}

/// B diag(w) B^T.
inline Mat weighted_laplacian(const Mat& incidence, const Vec& weights) {
    if (incidence.cols() != weights.size()) {
        throw InputError("weighted_laplacian: incidence has " + std::to_string(incidence.cols()) +
                         " columns but " + std::to_string(weights.size()) + " weights were given");
    }
    if ((weights.array() < 0.0).any()) {
        throw InputError("weighted_laplacian: weights must be nonnegative");
    }
    return incidence * weights.asDiagonal() * incidence.transpose();
}

inline Mat unit_laplacian(std::size_t n, const std::vector<Edge>& edges) {
    return weighted_laplacian(incidence_matrix(n, edges), Vec::Ones(static_cast<Eigen::Index>(edges.size())));
}

inline bool is_connected(std::size_t n, const std::vector<Edge>& edges) {
    if (n <= 1) return true;
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::size_t components = n;
    for (const auto& [a, b] : edges) {
        const auto ra = find(a);
        const auto rb = find(b);
        if (ra != rb) {
            parent[ra] = rb;
            --components;
        }
    }
    return components == 1;
}

namespace detail {

inline std::vector<Edge> map_edges(const std::vector<std::pair<int, int>>& pairs,
                                   const std::map<int, std::size_t>& index, const char* what) {
    std::vector<Edge> out;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& [a, b] : pairs) {
        const auto ia = index.find(a);
        const auto ib = index.find(b);
        if (ia == index.end() || ib == index.end()) {
            throw InputError(std::string(what) + " edge " + std::to_string(a) + "-" + std::to_string(b) +
                             " references an unknown bus");
        }
        if (a == b) {
            throw InputError(std::string(what) + " edge " + std::to_string(a) + "-" + std::to_string(b) +
                             " is a self-loop");
        }
        const auto key = std::minmax(ia->second, ib->second);
        if (!seen.insert(key).second) {
            throw InputError(std::string("duplicate ") + what + " edge " + std::to_string(a) + "-" +
                             std::to_string(b));
        }
        out.emplace_back(ia->second, ib->second);
    }
    return out;
}

}  // namespace detail

/// Validates a description and assembles the internal model.
inline NetworkModel build_network(const NetworkDescription& desc) {
    if (desc.buses.size() < 2) throw InputError("network needs at least two buses");

    std::set<int> ids;
    for (const auto& b : desc.buses) {
        if (!ids.insert(b.id).second) throw InputError("duplicate bus id " + std::to_string(b.id));
    }
    std::set<int> gens;
    for (int g : desc.generators) {
        if (!ids.count(g)) throw InputError("generator " + std::to_string(g) + " is not a bus");
        if (!gens.insert(g).second) throw InputError("generator " + std::to_string(g) + " listed twice");
    }
    if (gens.empty()) throw InputError("at least one generator bus is required");

    // Generators first, each group in document order.
    std::vector<const BusSpec*> order;
    for (const auto& b : desc.buses)
        if (gens.count(b.id)) order.push_back(&b);
    for (const auto& b : desc.buses)
        if (!gens.count(b.id)) order.push_back(&b);

    NetworkModel model;
    PowerNetwork& net = model.net;
    net.n = order.size();
    net.n_g = gens.size();
    net.n_l = net.n - net.n_g;
    const auto n = static_cast<Eigen::Index>(net.n);

    std::map<int, std::size_t> index;
    net.inertia.resize(static_cast<Eigen::Index>(net.n_g));
    net.damping.resize(n);
    net.load.resize(n);
    Vec voltage(n);
    Vec cost(n);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const BusSpec& b = *order[i];
        const auto ii = static_cast<Eigen::Index>(i);
        index[b.id] = i;
        net.labels.push_back(b.id);
        const std::string tag = "bus " + std::to_string(b.id);
        if (!(b.voltage > 0.0)) throw InputError(tag + ": voltage must be positive");
        if (!(b.damping > 0.0)) throw InputError(tag + ": damping must be positive");
        if (!(b.cost > 0.0)) throw InputError(tag + ": cost coefficient must be positive");
        if (i < net.n_g) {
            if (!(b.inertia > 0.0)) throw InputError(tag + ": generator inertia must be positive");
            net.inertia(ii) = b.inertia;
        } else if (b.inertia != 0.0) {
            throw InputError(tag + ": load buses carry no inertia");
        }
        voltage(ii) = b.voltage;
        net.damping(ii) = b.damping;
        net.load(ii) = b.load;
        cost(ii) = b.cost;
    }

    std::vector<std::pair<int, int>> line_pairs;
    for (const auto& l : desc.lines) line_pairs.emplace_back(l.from, l.to);
    net.edges = detail::map_edges(line_pairs, index, "line");
    if (net.edges.empty()) throw InputError("network has no lines");
    net.gamma.resize(static_cast<Eigen::Index>(net.edges.size()));
    for (std::size_t k = 0; k < net.edges.size(); ++k) {
        const double bij = desc.lines[k].susceptance;
        if (!(bij > 0.0)) {
            throw InputError("line " + std::to_string(desc.lines[k].from) + "-" + std::to_string(desc.lines[k].to) +
                             ": susceptance must be positive");
        }
        const auto [i, j] = net.edges[k];
        net.gamma(static_cast<Eigen::Index>(k)) =
            bij * voltage(static_cast<Eigen::Index>(i)) * voltage(static_cast<Eigen::Index>(j));
    }
    if (!is_connected(net.n, net.edges)) throw InputError("physical graph disconnected");
    net.incidence = incidence_matrix(net.n, net.edges);

    ControllerSetup& ctrl = model.ctrl;
    ctrl.cost = cost;
    ctrl.comm_edges = detail::map_edges(desc.comm_edges, index, "communication");
    if (!is_connected(net.n, ctrl.comm_edges)) throw InputError("communication graph disconnected");
    ctrl.comm_laplacian = unit_laplacian(net.n, ctrl.comm_edges);
    return model;
}

// ---------------------------------------------------------------------------
// JSON configuration
//
// {
//   "buses":      [{"id": 1, "voltage": 0.98, "inertia": 3.26, "damping": 1.0,
//                   "self_susceptance": -46.6}, ...],
//   "generators": [1, 2],
//   "lines":      [{"from": 1, "to": 2, "susceptance": 25.6}, ...],
//   "comm_edges": [[1, 4], [2, 3], ...],
//   "costs":      {"1": 1.0, ...}      or an array aligned with "buses",
//   "loads":      {"3": 0.72, ...}     or an array aligned with "buses"
// }
//
// "self_susceptance" is accepted and ignored. Missing loads default to 0.

namespace detail {

inline std::map<int, double> per_bus_values(const nlohmann::json& node, const std::vector<BusSpec>& buses,
                                            const char* key) {
    std::map<int, double> out;
    if (node.is_array()) {
        if (node.size() != buses.size()) {
            throw InputError(std::string("\"") + key + "\" array must have one entry per bus");
        }
        for (std::size_t i = 0; i < buses.size(); ++i) out[buses[i].id] = node[i].get<double>();
    } else if (node.is_object()) {
        for (const auto& [k, v] : node.items()) {
            int id = 0;
            try {
                std::size_t pos = 0;
                id = std::stoi(k, &pos);
                if (pos != k.size()) throw std::invalid_argument(k);
            } catch (const std::exception&) {
                throw InputError(std::string("\"") + key + "\": key '" + k + "' is not a bus id");
            }
            out[id] = v.get<double>();
        }
    } else {
        throw InputError(std::string("\"") + key + "\" must be an array or an object");
    }
    return out;
}

}  // namespace detail

inline NetworkDescription parse_description(const nlohmann::json& cfg) {
    try {
        for (const char* key : {"buses", "generators", "lines", "comm_edges", "costs"}) {
            if (!cfg.contains(key)) throw InputError(std::string("config is missing \"") + key + "\"");
        }
        NetworkDescription d;
        for (const auto& b : cfg.at("buses")) {
            BusSpec s;
            s.id = b.at("id").get<int>();
            s.voltage = b.value("voltage", 1.0);
            s.inertia = b.value("inertia", 0.0);
            s.damping = b.at("damping").get<double>();
            d.buses.push_back(s);
        }
        d.generators = cfg.at("generators").get<std::vector<int>>();
        for (const auto& l : cfg.at("lines")) {
            d.lines.push_back({l.at("from").get<int>(), l.at("to").get<int>(), l.at("susceptance").get<double>()});
        }
        for (const auto& e : cfg.at("comm_edges")) {
            if (!e.is_array() || e.size() != 2) throw InputError("comm_edges entries must be [a, b] pairs");
            d.comm_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
        const auto costs = detail::per_bus_values(cfg.at("costs"), d.buses, "costs");
        std::map<int, double> loads;
        if (cfg.contains("loads")) loads = detail::per_bus_values(cfg.at("loads"), d.buses, "loads");
        std::set<int> ids;
        for (auto& b : d.buses) {
            ids.insert(b.id);
            const auto c = costs.find(b.id);
            if (c == costs.end()) throw InputError("no cost given for bus " + std::to_string(b.id));
            b.cost = c->second;
            if (const auto p = loads.find(b.id); p != loads.end()) b.load = p->second;
        }
        for (const auto& [id, _] : loads) {
            if (!ids.count(id)) throw InputError("load given for unknown bus " + std::to_string(id));
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed network config: ") + e.what());
    }
}

inline NetworkModel build_network(const nlohmann::json& cfg) { return build_network(parse_description(cfg)); }

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("cannot parse " + path.string() + ": " + e.what());
    }
}

inline NetworkModel load_network(const std::filesystem::path& path) { return build_network(read_json_file(path)); }

}  // namespace swingcert
