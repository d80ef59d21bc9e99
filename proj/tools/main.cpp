// Command-line front end: loads a scenario document, runs one of the
// drivers, prints the human summary to stdout, and optionally writes the
// JSON report.  Exit codes: 0 all checks pass, 1 a check failed, 2 bad
// input, 3 the solver did not converge.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bnmarket/errors.hpp"
#include "bnmarket/scenario.hpp"

namespace {

struct CliArgs {
    std::string file;
    std::string out_path;
    bool strict = false;
    std::vector<std::string> tol_flags;
    std::string quote;
    int trials = -1;
    long long seed = -1;
};

bnm::RunOptions make_options(const CliArgs& args) {
    bnm::RunOptions options;
    options.strict = args.strict;
    options.tol = bnm::tolerances_from_env();
    for (const std::string& flag : args.tol_flags) {
        const auto eq = flag.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == flag.size()) {
            throw bnm::ValidationError("--tol expects name=value, got: " + flag);
        }
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(flag.substr(eq + 1), &used);
            if (used != flag.size() - eq - 1) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw bnm::ValidationError("--tol value is not a number: " + flag);
        }
        bnm::set_tolerance(options.tol, flag.substr(0, eq), value);
    }
    return options;
}

int emit(const bnm::RunReport& report, const CliArgs& args) {
    std::cout << report.text;
    if (!args.out_path.empty()) {
        std::ofstream out(args.out_path);
        if (!out) {
            std::cerr << "error: cannot open " << args.out_path << " for writing\n";
            return 2;
        }
        out << report.json;
    }
    return report.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale laboratory for conditional-security markets"};
    app.require_subcommand(1);

    CliArgs args;
    app.add_option("--out", args.out_path, "Write the JSON report to this path");
    app.add_flag("--strict", args.strict, "Soft findings also fail the run");
    app.add_option("--tol", args.tol_flags, "Override a tolerance as name=value (repeatable)")
        ->allow_extra_args(false);

    const auto add_file = [&](CLI::App* sub) {
        sub->add_option("file", args.file, "Scenario document (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->fallthrough();
        return sub;
    };
    CLI::App* run = add_file(app.add_subcommand("run", "Solve the scenario's market"));
    CLI::App* compare = add_file(
        app.add_subcommand("compare", "Solve compact and fully connected markets side by side"));
    CLI::App* arbitrage =
        add_file(app.add_subcommand("arbitrage", "Check an outside quote against implied prices"));
    arbitrage->add_option("--quote", args.quote, "Quote as \"<security>=<price>\"")->required();
    CLI::App* protocol =
        add_file(app.add_subcommand("protocol", "Run the market-formation rounds"));
    CLI::App* search =
        add_file(app.add_subcommand("search", "Hunt for risk-neutral consensus failures"));
    search->add_option("--trials", args.trials, "Trial budget (overrides the scenario)");
    search->add_option("--seed", args.seed, "Run seed (overrides the scenario)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const bnm::RunOptions options = make_options(args);
        bnm::Scenario scenario = bnm::load_scenario(args.file);
        bnm::RunReport report;
        if (run->parsed()) {
            report = bnm::run_scenario(scenario, options);
        } else if (compare->parsed()) {
            report = bnm::compare_scenario(scenario, options);
        } else if (arbitrage->parsed()) {
            const bnm::Quote quote = bnm::parse_quote(args.quote, scenario.space);
            report = bnm::arbitrage_scenario(scenario, quote, options);
        } else if (protocol->parsed()) {
            report = bnm::protocol_scenario(scenario, options);
        } else {
            if (args.trials >= 0) scenario.experiment.trials = args.trials;
            if (args.seed >= 0) scenario.experiment.seed = static_cast<std::uint64_t>(args.seed);
            report = bnm::search_scenario(scenario, options);
        }
        return emit(report, args);
    } catch (const bnm::NoConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
