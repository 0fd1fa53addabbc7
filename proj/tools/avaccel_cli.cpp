// Command-line entry point: gen, train, eval, plot and bench, each driven by
// a JSON config with a few flag overrides.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "avaccel/harness.hpp"

using namespace avaccel;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_seed) {
    cmd->add_option("-c,--config", o.config, "JSON config file")->required();
    cmd->add_option("-o,--out", o.out, "Override the output path");
    if (with_seed) cmd->add_option("-s,--seed", o.seed, "Override the seed");
}

// A missing or unreadable config is a configuration problem, not a data one.
std::string read_config(const std::string& path) {
    try {
        return read_text_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
}

template <class F>
int guarded(F&& body) {
    try {
        body();
        return exit_ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceleration prediction from synthetic driving data"};
    app.require_subcommand(1);

    Overrides gen_o, train_o, eval_o, plot_o, bench_o;
    std::optional<std::size_t> bench_threads;
    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    add_common(gen, gen_o, true);
    CLI::App* train = app.add_subcommand("train", "Train one model");
    add_common(train, train_o, true);
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a saved model");
    add_common(eval, eval_o, false);
    CLI::App* plot = app.add_subcommand("plot", "Plot loss curves to SVG");
    add_common(plot, plot_o, false);
    CLI::App* bench = app.add_subcommand("bench", "Run the model x data-size x seed grid");
    add_common(bench, bench_o, true);
    bench->add_option("-j,--threads", bench_threads, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config_error;
    }

    if (*gen) {
        return guarded([&] {
            GenConfig c = parse_gen_config(read_config(gen_o.config));
            if (gen_o.seed) c.seed = *gen_o.seed;
            if (gen_o.out) c.out = *gen_o.out;
            cmd_gen(c, std::cout);
        });
    }
    if (*train) {
        return guarded([&] {
            ExperimentConfig c = parse_experiment_config(read_config(train_o.config));
            if (train_o.seed) c.train.seed = *train_o.seed;
            if (train_o.out) c.out = *train_o.out;
            cmd_train(c, std::cout);
        });
    }
    if (*eval) {
        return guarded([&] {
            EvalConfig c = parse_eval_config(read_config(eval_o.config));
            if (eval_o.out) c.out = *eval_o.out;
            cmd_eval(c, std::cout);
        });
    }
    if (*plot) {
        return guarded([&] {
            PlotConfig c = parse_plot_config(read_config(plot_o.config));
            if (plot_o.out) c.out = *plot_o.out;
            cmd_plot(c, std::cout);
        });
    }
    return guarded([&] {
        BenchConfig c = parse_bench_config(read_config(bench_o.config));
        if (bench_o.seed) c.seed = *bench_o.seed;
        if (bench_o.out) c.out = *bench_o.out;
        if (bench_threads) c.threads = *bench_threads;
        cmd_bench(c, std::cout);
    });
}
