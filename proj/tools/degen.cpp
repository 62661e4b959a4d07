#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "degen/commands.hpp"

int main(int argc, char** argv)
{
    using namespace degen;
    CLI::App app{"Controllability experiments for degenerate parabolic equations"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<double> alpha, T, s, epsilon, grading, rel_tol;
    std::optional<int> nx, nt, samples, max_iter;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> eps_list, s_list, out, format, solver;

    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--alpha", alpha, "degeneracy exponent in (0,2)");
    app.add_option("--T", T, "time horizon");
    app.add_option("--s", s, "Carleman parameter");
    app.add_option("--epsilon", epsilon, "control region width");
    app.add_option("--eps-list", eps_list, "comma-separated decreasing widths for sweep");
    app.add_option("--s-list", s_list, "comma-separated s values for verify-carleman");
    app.add_option("--nx", nx, "space cells");
    app.add_option("--nt", nt, "time steps");
    app.add_option("--grading", grading, "mesh grading toward x=0");
    app.add_option("--seed", seed, "battery seed");
    app.add_option("--samples", samples, "battery size (0 = command default)");
    app.add_option("--solver", solver, "direct or cg");
    app.add_option("--rel-tol", rel_tol, "solver relative tolerance");
    app.add_option("--max-iter", max_iter, "CG iteration cap");
    app.add_option("--out", out, "output directory");
    app.add_option("--format", format, "comma-separated subset of csv,json,svg");

    for (const auto& [cmd, name] : command_names()) app.add_subcommand(name, "");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitError;
    }

    RunConfig cfg;
    try {
        cfg = load_config(config_path, [&](RunConfig& c) {
            c.command = parse_command(app.get_subcommands().front()->get_name());
            if (alpha) c.alpha = *alpha;
            if (T) c.T = *T;
            if (s) c.s = *s;
            if (epsilon) c.epsilon = *epsilon;
            if (eps_list) c.eps_list = parse_number_list(*eps_list);
            if (s_list) c.s_list = parse_number_list(*s_list);
            if (nx) c.nx = *nx;
            if (nt) c.nt = *nt;
            if (grading) c.grading = *grading;
            if (seed) c.seed = *seed;
            if (samples) c.samples = *samples;
            if (solver) c.solver = *solver;
            if (rel_tol) c.rel_tol = *rel_tol;
            if (max_iter) c.max_iter = *max_iter;
            if (out) c.out = *out;
            if (format) c.format = split_list(*format);
        });
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return run_command(cfg);
}
