#include "polp/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <sstream>

namespace {

void configure_logging() {
    spdlog::set_default_logger(spdlog::stderr_logger_mt("polp"));
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("POLP_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

std::pair<double, double> parse_range(const std::string& text) {
    std::istringstream in(text);
    double lo = 0.0, hi = 0.0;
    char comma = 0;
    if (!(in >> lo >> comma >> hi) || comma != ',') throw polp::ContractError("cli", "expected LO,HI but got " + text);
    return {lo, hi};
}

} // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Probabilistic logic programs with optimizable facts"};
    app.require_subcommand(1);

    polp::cli::RunOptions run;
    std::string format = "json";
    std::string dot_path;
    auto* run_cmd = app.add_subcommand("run", "Optimize the probabilities of a program's optimizable facts");
    run_cmd->add_option("--program", run.program_path, "Program file")->required();
    run_cmd->add_option("--query", run.query, "Ground query atom (defaults to the program's polp directive)");
    run_cmd->add_option("--objective", run.objective, "Objective over optimizable facts");
    run_cmd->add_option("--constraint", run.constraints, "Constraint, repeatable");
    run_cmd->add_flag("--maximize", run.maximize, "Maximize instead of minimize");
    run_cmd->add_option("--tol", run.solver.tolerance, "Solver tolerance")->capture_default_str();
    run_cmd->add_option("--max-iters", run.solver.max_iters, "Iteration limit")->capture_default_str();
    run_cmd->add_option("--multistart", run.solver.multistart, "Number of start points")->check(CLI::PositiveNumber);
    run_cmd->add_option("--seed", run.solver.seed, "Multistart seed");
    run_cmd->add_option("--strict-eps", run.solver.strict_eps, "Margin applied to strict inequalities");
    run_cmd->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "text", "csv"}));
    run_cmd->add_option("--dot", dot_path, "Write the reordered query BDD as Graphviz");
    run_cmd->add_option("--timeout", run.pipeline.limits.solve, "Per-phase timeout in seconds (0 = none)")
        ->each([&](const std::string&) {
            run.pipeline.limits.grounding = run.pipeline.limits.compile = run.pipeline.limits.extract =
                run.pipeline.limits.solve;
        });

    std::string edges_path, out_path, opt_range;
    polp::cli::IngestOptions ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Convert an edge list into a program");
    ingest_cmd->add_option("--edges", edges_path, "Edge list, one `u v` pair per line")->required();
    ingest_cmd->add_option("--opt-fraction", ingest.opt_fraction, "Share of optimizable edges")->required();
    ingest_cmd->add_option("--seed", ingest.seed, "Seed of the edge partition")->required();
    ingest_cmd->add_option("--out", out_path, "Output program file")->required();
    ingest_cmd->add_option("--fixed-prob", ingest.fixed_prob, "Probability of the fixed edges")->capture_default_str();
    ingest_cmd->add_option("--opt-range", opt_range, "LO,HI range of the optimizable edges");

    polp::cli::BenchOptions bench;
    std::string bench_out;
    auto* bench_cmd = app.add_subcommand("bench", "Benchmarks");
    bench_cmd->require_subcommand(1);
    auto* complete_cmd = bench_cmd->add_subcommand("complete", "Complete-graph experiment for n = min-n..max-n");
    complete_cmd->add_option("--max-n", bench.max_n, "Largest graph")->required();
    complete_cmd->add_option("--min-n", bench.min_n, "Smallest graph")->capture_default_str();
    complete_cmd->add_option("--seed", bench.seed, "Seed of the edge partition")->capture_default_str();
    complete_cmd->add_option("--out", bench_out, "CSV output file (stdout when omitted)");
    complete_cmd->add_option("--cap", bench.cap, "Largest accepted n")->capture_default_str();
    complete_cmd->add_option("--timeout", bench.limits.solve, "Per-phase timeout in seconds")
        ->each([&](const std::string&) {
            bench.limits.grounding = bench.limits.compile = bench.limits.extract = bench.limits.solve;
        });

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            run.pipeline.want_dot = !dot_path.empty();
            spdlog::info("running {}", run.program_path);
            polp::cli::RunOutcome out = polp::cli::run(run);
            if (!dot_path.empty()) polp::cli::write_file(dot_path, out.result.dot);
            if (format == "json") std::cout << polp::cli::report_json(out.report);
            else if (format == "csv") std::cout << polp::cli::report_csv(out.report);
            else std::cout << polp::cli::report_text(out.report);
            spdlog::info("status {} after {} iterations", out.report.status, out.report.iterations);
            return out.exit_code;
        }
        if (*ingest_cmd) {
            if (!opt_range.empty()) std::tie(ingest.opt_lower, ingest.opt_upper) = parse_range(opt_range);
            polp::cli::write_file(out_path, polp::cli::ingest_edgelist(polp::cli::read_file(edges_path), ingest));
            spdlog::info("wrote {}", out_path);
            return 0;
        }
        if (*complete_cmd) {
            auto rows = polp::cli::bench_complete(bench);
            for (const auto& r : rows) spdlog::info("n={} status={} p={} in {} ms", r.n, r.status, r.probability, r.total_ms);
            const std::string csv = polp::cli::bench_csv(rows);
            if (bench_out.empty()) std::cout << csv;
            else polp::cli::write_file(bench_out, csv);
            for (const auto& r : rows)
                if (r.status == "error") return polp::cli::kError;
            return 0;
        }
    } catch (const polp::Error& e) {
        std::cerr << "polp: " << e.module() << ": " << e.what() << "\n";
        return polp::cli::kError;
    } catch (const std::exception& e) {
        std::cerr << "polp: " << e.what() << "\n";
        return polp::cli::kError;
    }
    return polp::cli::kError;
}
