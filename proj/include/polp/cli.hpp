#pragma once

#include "polp/error.hpp"
#include "polp/parser.hpp"
#include "polp/pipeline.hpp"
#include "polp/problem.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace polp::cli {

enum ExitCode : int { kConverged = 0, kError = 1, kInfeasible = 2, kMaxIters = 3 };

inline int exit_code(opt::Status s) {
    switch (s) {
    case opt::Status::Converged: return kConverged;
    case opt::Status::Infeasible: return kInfeasible;
    case opt::Status::MaxIters: return kMaxIters;
    }
    return kError;
}

struct RunReport {
    int schema = 1;
    std::string program;
    std::string query;
    std::string direction = "minimize";
    std::string status;
    std::map<std::string, double> assignment;
    double objective_value = 0.0;
    double query_probability = 0.0;
    std::map<std::string, double> query_probs;
    std::size_t iterations = 0;
    double kkt_residual = 0.0;
    double max_violation = 0.0;
    PhaseTimings timings;
    std::string polynomial;
    BddStats bdd_stats;

    friend bool operator==(const RunReport&, const RunReport&) = default;
};

inline nlohmann::ordered_json to_json(const RunReport& r) {
    nlohmann::ordered_json j;
    j["schema"] = r.schema;
    j["program"] = r.program;
    j["query"] = r.query;
    j["direction"] = r.direction;
    j["status"] = r.status;
    j["assignment"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.assignment) j["assignment"][k] = v;
    j["objective_value"] = r.objective_value;
    j["query_probability"] = r.query_probability;
    j["query_probs"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.query_probs) j["query_probs"][k] = v;
    j["iterations"] = r.iterations;
    j["kkt_residual"] = r.kkt_residual;
    j["max_violation"] = r.max_violation;
    j["timings_ms"] = {{"grounding", r.timings.grounding_ms}, {"compile", r.timings.compile_ms},
                       {"reorder", r.timings.reorder_ms},     {"extract", r.timings.extract_ms},
                       {"solve", r.timings.solve_ms}};
    j["polynomial"] = r.polynomial;
    j["bdd_stats"] = {{"nodes", r.bdd_stats.nodes},
                      {"path_terms", r.bdd_stats.path_terms},
                      {"monomials", r.bdd_stats.monomials},
                      {"swaps", r.bdd_stats.swaps}};
    return j;
}

inline RunReport report_from_json(const nlohmann::ordered_json& j) {
    if (j.at("schema").get<int>() != 1) throw ContractError("cli", "unsupported report schema");
    RunReport r;
    r.program = j.at("program").get<std::string>();
    r.query = j.at("query").get<std::string>();
    r.direction = j.at("direction").get<std::string>();
    r.status = j.at("status").get<std::string>();
    for (const auto& [k, v] : j.at("assignment").items()) r.assignment[k] = v.get<double>();
    r.objective_value = j.at("objective_value").get<double>();
    r.query_probability = j.at("query_probability").get<double>();
    for (const auto& [k, v] : j.at("query_probs").items()) r.query_probs[k] = v.get<double>();
    r.iterations = j.at("iterations").get<std::size_t>();
    r.kkt_residual = j.at("kkt_residual").get<double>();
    r.max_violation = j.at("max_violation").get<double>();
    const auto& t = j.at("timings_ms");
    r.timings = {t.at("grounding").get<double>(), t.at("compile").get<double>(), t.at("reorder").get<double>(),
                 t.at("extract").get<double>(), t.at("solve").get<double>()};
    r.polynomial = j.at("polynomial").get<std::string>();
    const auto& s = j.at("bdd_stats");
    r.bdd_stats = {s.at("nodes").get<std::size_t>(), s.at("path_terms").get<std::size_t>(),
                   s.at("monomials").get<std::size_t>(), s.at("swaps").get<std::size_t>()};
    return r;
}

inline std::string report_json(const RunReport& r) { return to_json(r).dump(2) + "\n"; }

inline std::string report_text(const RunReport& r) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "status: " << r.status << "\n";
    os << "query: " << r.query << " = " << r.query_probability << "\n";
    os << "objective (" << r.direction << "): " << r.objective_value << "\n";
    for (const auto& [k, v] : r.assignment) os << "  " << k << " = " << v << "\n";
    for (const auto& [k, v] : r.query_probs)
        if (k != r.query) os << "  P(" << k << ") = " << v << "\n";
    os << "query equation: " << r.polynomial << "\n";
    os << "iterations: " << r.iterations << ", kkt residual: " << r.kkt_residual
       << ", max violation: " << r.max_violation << "\n";
    os << "bdd: " << r.bdd_stats.nodes << " nodes, " << r.bdd_stats.path_terms << " paths, " << r.bdd_stats.monomials
       << " monomials, " << r.bdd_stats.swaps << " swaps\n";
    os << std::setprecision(4) << "time ms: ground " << r.timings.grounding_ms << ", compile " << r.timings.compile_ms
       << ", reorder " << r.timings.reorder_ms << ", extract " << r.timings.extract_ms << ", solve "
       << r.timings.solve_ms << "\n";
    return os.str();
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

} // namespace detail

inline std::string report_csv(const RunReport& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "program,query,status,objective_value,query_probability,iterations,kkt_residual,grounding_ms,compile_ms,"
          "reorder_ms,extract_ms,solve_ms,nodes,path_terms,monomials";
    for (const auto& [k, v] : r.assignment) os << "," << detail::csv_field(k);
    os << "\n";
    os << detail::csv_field(r.program) << "," << detail::csv_field(r.query) << "," << r.status << ","
       << r.objective_value << "," << r.query_probability << "," << r.iterations << "," << r.kkt_residual << ","
       << r.timings.grounding_ms << "," << r.timings.compile_ms << "," << r.timings.reorder_ms << ","
       << r.timings.extract_ms << "," << r.timings.solve_ms << "," << r.bdd_stats.nodes << ","
       << r.bdd_stats.path_terms << "," << r.bdd_stats.monomials;
    for (const auto& [k, v] : r.assignment) os << "," << v;
    os << "\n";
    return os.str();
}

inline RunReport make_report(const std::string& program_path, const PipelineResult& res) {
    RunReport r;
    r.program = program_path;
    r.query = res.spec.query.to_string();
    r.direction = res.spec.direction == Direction::Maximize ? "maximize" : "minimize";
    r.status = opt::to_string(res.solution.status);
    for (std::size_t k = 0; k < res.opt_names.size(); ++k) r.assignment[res.opt_names[k]] = res.solution.assignment[k];
    r.objective_value = res.solution.objective_value;
    r.query_probability = res.query_probability;
    r.query_probs = res.solution.query_probs;
    r.iterations = res.solution.iterations;
    r.kkt_residual = res.solution.kkt_residual;
    r.max_violation = res.solution.max_violation;
    r.timings = res.timings;
    r.polynomial = res.polynomial_text.empty() ? "" : res.polynomial_text[0];
    r.bdd_stats = res.stats;
    return r;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cli", "cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cli", "cannot write " + path);
    out << text;
    if (!out) throw ContractError("cli", "write failed for " + path);
}

struct RunOptions {
    std::string program_path;
    /// Inline program text; read from program_path when empty.
    std::string program_text;
    std::string query;
    std::string objective;
    std::vector<std::string> constraints;
    bool maximize = false;
    SolverConfig solver;
    PipelineOptions pipeline;
};

struct RunOutcome {
    RunReport report;
    PipelineResult result;
    int exit_code = kError;
};

/// Parses the program and problem (falling back to the program's `% polp:`
/// directives when no query is given) and runs the pipeline.
inline RunOutcome run(const RunOptions& o) {
    const std::string text = o.program_text.empty() ? read_file(o.program_path) : o.program_text;
    Program prog = parse_program(text);
    std::string query = o.query, objective = o.objective;
    std::vector<std::string> constraints = o.constraints;
    Direction direction = o.maximize ? Direction::Maximize : Direction::Minimize;
    if (query.empty()) {
        auto d = parse_directives(prog);
        if (!d) throw ContractError("cli", "no query given and the program has no polp directive");
        query = d->query;
        if (objective.empty()) objective = d->objective;
        if (constraints.empty()) constraints = d->constraints;
        if (!o.maximize && d->direction) direction = *d->direction;
    }
    ProblemSpec spec = parse_problem(prog, query, objective, constraints, o.solver, direction);
    RunOutcome out;
    out.result = optimize_prob(prog, spec, o.pipeline);
    out.report = make_report(o.program_path, out.result);
    out.exit_code = exit_code(out.result.solution.status);
    return out;
}

struct IngestOptions {
    double opt_fraction = 0.5;
    std::uint64_t seed = 0;
    double fixed_prob = 0.5;
    double opt_lower = kDefaultOptLower;
    double opt_upper = kDefaultOptUpper;
};

namespace detail {

/// Seeded Fisher-Yates with a fixed reduction so the permutation is the same
/// on every standard library.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

inline std::string edge_program(const std::vector<std::pair<std::string, std::string>>& edges,
                                const IngestOptions& o) {
    if (!(o.opt_fraction >= 0.0 && o.opt_fraction <= 1.0))
        throw ContractError("cli", "opt fraction must lie in [0, 1]");
    if (!(o.fixed_prob > 0.0 && o.fixed_prob <= 1.0)) throw ContractError("cli", "fixed probability must lie in (0, 1]");
    if (!(0.0 < o.opt_lower && o.opt_lower < o.opt_upper && o.opt_upper < 1.0))
        throw ContractError("cli", "optimizable range must satisfy 0 < lower < upper < 1");
    std::vector<std::size_t> order(edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, o.seed);
    const auto n_opt = static_cast<std::size_t>(std::llround(o.opt_fraction * static_cast<double>(edges.size())));
    std::vector<bool> is_opt(edges.size(), false);
    for (std::size_t i = 0; i < n_opt; ++i) is_opt[order[i]] = true;

    std::string out;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string atom = "edge(" + edges[i].first + "," + edges[i].second + ")";
        if (is_opt[i])
            out += "optimizable [" + format_double(o.opt_lower) + "," + format_double(o.opt_upper) + "]::" + atom + ".\n";
        else
            out += format_double(o.fixed_prob) + "::" + atom + ".\n";
    }
    out += "path(X,X).\n";
    if (!edges.empty()) out += "path(X,Y) :- path(X,Z), edge(Z,Y).\n";
    return out;
}

inline bool valid_constant(const std::string& s) {
    if (s.empty()) return false;
    const unsigned char c0 = static_cast<unsigned char>(s[0]);
    if (std::isdigit(c0)) return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
    if (!std::islower(c0)) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

} // namespace detail

/// Converts a whitespace-separated `u v` edge list into a program of edge
/// facts, a seeded share of them optimizable, plus the path rules.
inline std::string ingest_edgelist(const std::string& text, const IngestOptions& o) {
    std::vector<std::pair<std::string, std::string>> edges;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<std::string> fields;
        for (std::string f; ls >> f;) fields.push_back(f);
        if (fields.empty()) continue;
        if (fields.size() != 2 || !detail::valid_constant(fields[0]) || !detail::valid_constant(fields[1]))
            throw ParseError(lineno, 1, "expected two node names per line, got '" + line + "'");
        edges.emplace_back(fields[0], fields[1]);
    }
    if (edges.empty()) throw ContractError("cli", "edge list is empty");
    return detail::edge_program(edges, o);
}

/// Complete graph on nodes 1..n with one edge i -> j for every i < j.
inline std::string complete_graph_program(std::size_t n, const IngestOptions& o) {
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = i + 1; j <= n; ++j) edges.emplace_back(std::to_string(i), std::to_string(j));
    return detail::edge_program(edges, o);
}

struct BenchRow {
    std::size_t n = 0;
    std::size_t edges = 0;
    std::size_t opt_facts = 0;
    std::string status;
    double probability = 0.0;
    double objective = 0.0;
    double total_ms = 0.0;
    PhaseTimings timings;
    std::string error;
};

struct BenchOptions {
    std::size_t min_n = 3;
    std::size_t max_n = 6;
    std::uint64_t seed = 1;
    /// Largest accepted n.
    std::size_t cap = 7;
    double threshold = 0.8;
    PhaseLimits limits;
};

/// One instance of the complete-graph experiment: minimize the sum of all
/// optimizable edges subject to path(1,n) > threshold.
inline BenchRow bench_instance(std::size_t n, const BenchOptions& o) {
    IngestOptions io;
    io.seed = o.seed;
    const std::string text = complete_graph_program(n, io);
    Program prog = parse_program(text);
    BenchRow row;
    row.n = n;
    row.edges = prog.prob_facts.size() + prog.opt_facts.size();
    row.opt_facts = prog.opt_facts.size();
    std::string objective;
    for (const auto& f : prog.opt_facts) objective += (objective.empty() ? "" : " + ") + f.atom.to_string();
    const std::string query = "path(1," + std::to_string(n) + ")";
    std::vector<std::string> constraints;
    if (n > 1) constraints.push_back(query + " > " + format_double(o.threshold));
    const auto start = std::chrono::steady_clock::now();
    try {
        ProblemSpec spec = parse_problem(prog, query, objective, constraints);
        PipelineOptions po;
        po.limits = o.limits;
        PipelineResult res = optimize_prob(prog, spec, po);
        row.status = opt::to_string(res.solution.status);
        row.probability = res.query_probability;
        row.objective = res.solution.objective_value;
        row.timings = res.timings;
    } catch (const Error& e) {
        row.status = "error";
        row.error = e.module() + ": " + e.what();
    }
    row.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return row;
}

inline std::vector<BenchRow> bench_complete(const BenchOptions& o) {
    if (o.max_n > o.cap)
        throw ContractError("cli", "n = " + std::to_string(o.max_n) + " exceeds the cap of " + std::to_string(o.cap));
    if (o.min_n < 1 || o.min_n > o.max_n) throw ContractError("cli", "invalid n range");
    std::vector<BenchRow> rows;
    for (std::size_t n = o.min_n; n <= o.max_n; ++n) rows.push_back(bench_instance(n, o));
    return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "n,edges,opt_facts,status,probability,objective,total_ms,grounding_ms,compile_ms,reorder_ms,extract_ms,"
          "solve_ms,error\n";
    for (const auto& r : rows)
        os << r.n << "," << r.edges << "," << r.opt_facts << "," << r.status << "," << r.probability << ","
           << r.objective << "," << r.total_ms << "," << r.timings.grounding_ms << "," << r.timings.compile_ms << ","
           << r.timings.reorder_ms << "," << r.timings.extract_ms << "," << r.timings.solve_ms << ","
           << detail::csv_field(r.error) << "\n";
    return os.str();
}

} // namespace polp::cli
