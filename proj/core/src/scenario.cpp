#include "bnmarket/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bnmarket/errors.hpp"
#include "bnmarket/rng.hpp"

namespace bnm {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& pointer,
                       const std::string& message) {
    throw ValidationError(origin + ": " + pointer + ": " + message);
}

double number_at(const json& j, const std::string& origin, const std::string& pointer) {
    if (!j.is_number()) fail(origin, pointer, "expected a number");
    return j.get<double>();
}

const json& member(const json& j, const char* key, const std::string& origin,
                   const std::string& pointer) {
    if (!j.is_object() || !j.contains(key)) {
        fail(origin, pointer, std::string("missing key '") + key + "'");
    }
    return j.at(key);
}

EventSpace parse_events(const json& j, const std::string& origin) {
    if (j.is_number_integer()) {
        const int m = j.get<int>();
        if (m < 1 || m > kMaxEvents) fail(origin, "/events", "event count out of range");
        return EventSpace(m);
    }
    if (j.is_array()) {
        std::vector<std::string> labels;
        for (const auto& v : j) {
            if (!v.is_string()) fail(origin, "/events", "labels must be strings");
            labels.push_back(v.get<std::string>());
        }
        try {
            return EventSpace(std::move(labels));
        } catch (const std::exception& e) {
            fail(origin, "/events", e.what());
        }
    }
    fail(origin, "/events", "expected an event count or an array of labels");
}

Dag parse_dag(const json& j, const EventSpace& space, const std::string& origin,
              const std::string& pointer) {
    if (!j.is_array()) fail(origin, pointer, "expected an array of parent lists");
    if (static_cast<int>(j.size()) != space.size()) {
        fail(origin, pointer, "need one parent list per event");
    }
    std::vector<std::vector<int>> parents;
    for (const auto& row : j) {
        if (!row.is_array()) fail(origin, pointer, "parent lists must be arrays");
        std::vector<int> p;
        for (const auto& v : row) {
            if (!v.is_number_integer()) fail(origin, pointer, "parent indices must be integers");
            p.push_back(v.get<int>());
        }
        parents.push_back(std::move(p));
    }
    try {
        return Dag(space, std::move(parents));
    } catch (const std::exception& e) {
        fail(origin, pointer, e.what());
    }
}

Market parse_market(const json& j, const EventSpace& space, PriceVector* quoted,
                    const std::string& origin) {
    if (j.is_string()) {
        const std::string kind = j.get<std::string>();
        if (kind == "complete") return complete_market(space);
        if (kind == "base") return base_market(space);
        fail(origin, "/market", "unknown market kind '" + kind + "'");
    }
    if (!j.is_object()) fail(origin, "/market", "expected \"complete\", \"base\", or an object");
    Market market = [&]() -> Market {
        if (j.contains("dag")) {
            return Market(parse_dag(j.at("dag"), space, origin, "/market/dag"));
        }
        if (j.contains("securities")) {
            const json& list = j.at("securities");
            if (!list.is_array()) fail(origin, "/market/securities", "expected an array");
            std::vector<Security> secs;
            for (const auto& v : list) {
                if (!v.is_string()) fail(origin, "/market/securities", "entries must be strings");
                try {
                    secs.push_back(parse_security(v.get<std::string>(), space));
                } catch (const std::exception& e) {
                    fail(origin, "/market/securities", e.what());
                }
            }
            try {
                return Market(space, std::move(secs));
            } catch (const std::exception& e) {
                fail(origin, "/market/securities", e.what());
            }
        }
        fail(origin, "/market", "need 'dag' or 'securities'");
    }();
    if (j.contains("prices")) {
        const json& prices = j.at("prices");
        if (!prices.is_array() || static_cast<int>(prices.size()) != market.size()) {
            fail(origin, "/market/prices", "need one price per security");
        }
        for (std::size_t i = 0; i < prices.size(); ++i) {
            const double p = number_at(prices[i], origin, "/market/prices");
            if (!(p > 0.0 && p < 1.0)) fail(origin, "/market/prices", "prices must lie in (0,1)");
            quoted->push_back(p);
        }
    }
    return market;
}

Utility parse_utility(const json& j, const std::string& origin, const std::string& pointer) {
    if (!j.is_object()) fail(origin, pointer, "expected an object with 'kind'");
    const std::string kind = member(j, "kind", origin, pointer).get<std::string>();
    try {
        if (kind == "linear") return Utility::linear();
        if (kind == "exponential") {
            return Utility::exponential(number_at(member(j, "c", origin, pointer), origin, pointer));
        }
        if (kind == "log") {
            return Utility::log(number_at(member(j, "w0", origin, pointer), origin, pointer));
        }
    } catch (const std::exception& e) {
        fail(origin, pointer, e.what());
    }
    fail(origin, pointer, "unknown utility kind '" + kind + "'");
}

JointDistribution parse_belief(const json& j, const EventSpace& space, const std::string& origin,
                               const std::string& pointer) {
    if (!j.is_object()) fail(origin, pointer, "expected an object");
    if (j.contains("joint")) {
        const json& table = j.at("joint");
        if (!table.is_array() || table.size() != space.num_states()) {
            fail(origin, pointer + "/joint", "need one weight per world state");
        }
        std::vector<double> weights;
        for (const auto& v : table) weights.push_back(number_at(v, origin, pointer + "/joint"));
        try {
            return JointDistribution::from_weights(space, std::move(weights));
        } catch (const std::exception& e) {
            fail(origin, pointer + "/joint", e.what());
        }
    }
    if (j.contains("dag")) {
        const Dag dag = parse_dag(j.at("dag"), space, origin, pointer + "/dag");
        const json& cpts = member(j, "cpts", origin, pointer);
        if (!cpts.is_array() || static_cast<int>(cpts.size()) != space.size()) {
            fail(origin, pointer + "/cpts", "need one table per event");
        }
        std::vector<Cpt> tables;
        for (int k = 0; k < space.size(); ++k) {
            const json& row = cpts[k];
            if (!row.is_array()) fail(origin, pointer + "/cpts", "tables must be arrays");
            Cpt t;
            t.node = k;
            for (const auto& v : row) t.rows.push_back(number_at(v, origin, pointer + "/cpts"));
            tables.push_back(std::move(t));
        }
        try {
            return joint_from_bn(BayesNet(dag, std::move(tables)));
        } catch (const std::exception& e) {
            fail(origin, pointer + "/cpts", e.what());
        }
    }
    fail(origin, pointer, "need 'joint' or 'dag'+'cpts'");
}

std::vector<double> parse_endowment(const json& j, const EventSpace& space,
                                    const std::string& origin, const std::string& pointer) {
    const std::uint32_t n = space.num_states();
    if (j.is_array()) {
        if (j.size() != n) fail(origin, pointer, "need one value per world state");
        std::vector<double> e;
        for (const auto& v : j) e.push_back(number_at(v, origin, pointer));
        return e;
    }
    if (j.is_object() && j.contains("cliques")) {
        // Separable form: one table per clique, summed state-wise.  Values
        // are indexed by the packed clique assignment, lowest event index
        // least significant.
        std::vector<double> e(n, 0.0);
        const json& cliques = j.at("cliques");
        if (!cliques.is_array()) fail(origin, pointer + "/cliques", "expected an array");
        for (const auto& term : cliques) {
            const json& events = member(term, "events", origin, pointer + "/cliques");
            std::uint32_t mask = 0;
            for (const auto& v : events) {
                if (!v.is_number_integer()) {
                    fail(origin, pointer + "/cliques", "event indices must be integers");
                }
                const int idx = v.get<int>();
                if (idx < 0 || idx >= space.size()) {
                    fail(origin, pointer + "/cliques", "event index out of range");
                }
                mask |= 1u << idx;
            }
            const json& values = member(term, "values", origin, pointer + "/cliques");
            if (!values.is_array() ||
                values.size() != (1u << static_cast<unsigned>(std::popcount(mask)))) {
                fail(origin, pointer + "/cliques", "need one value per clique assignment");
            }
            for (WorldState s = 0; s < n; ++s) {
                e[s] += number_at(values[pack_bits(s, mask)], origin, pointer + "/cliques");
            }
        }
        return e;
    }
    fail(origin, pointer, "expected a state vector or {\"cliques\": [...]}");
}

SolverOptions parse_solver(const json& j, const std::string& origin) {
    SolverOptions opts;
    if (j.is_null()) return opts;
    if (!j.is_object()) fail(origin, "/solver", "expected an object");
    if (j.contains("clear_tol")) opts.clear_tol = number_at(j.at("clear_tol"), origin, "/solver");
    if (j.contains("foc_tol")) opts.foc_tol = number_at(j.at("foc_tol"), origin, "/solver");
    if (j.contains("max_iterations")) opts.max_iterations = j.at("max_iterations").get<int>();
    if (j.contains("max_demand_iterations")) {
        opts.max_demand_iterations = j.at("max_demand_iterations").get<int>();
    }
    if (j.contains("oc_tol")) opts.oc_tol = number_at(j.at("oc_tol"), origin, "/solver");
    return opts;
}

ExperimentSpec parse_experiment(const json& j, const std::string& origin) {
    ExperimentSpec spec;
    if (j.is_null()) return spec;
    if (!j.is_object()) fail(origin, "/experiment", "expected an object");
    if (j.contains("kind")) spec.kind = j.at("kind").get<std::string>();
    const bool known = spec.kind == "run" || spec.kind == "compare" || spec.kind == "arbitrage" ||
                       spec.kind == "protocol" || spec.kind == "search";
    if (!known) fail(origin, "/experiment/kind", "unknown experiment '" + spec.kind + "'");
    if (j.contains("demand_eps")) {
        spec.demand_eps = number_at(j.at("demand_eps"), origin, "/experiment");
    }
    if (j.contains("max_rounds")) spec.max_rounds = j.at("max_rounds").get<int>();
    if (j.contains("utility")) spec.search_utility = j.at("utility").get<std::string>();
    if (j.contains("trials")) spec.trials = j.at("trials").get<int>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("gap_threshold")) {
        spec.gap_threshold = number_at(j.at("gap_threshold"), origin, "/experiment");
    }
    if (j.contains("agents")) spec.search_agents = j.at("agents").get<int>();
    return spec;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

json checks_to_json(const std::vector<CheckResult>& checks) {
    json arr = json::array();
    for (const CheckResult& c : checks) {
        json e;
        e["name"] = c.name;
        e["pass"] = c.pass;
        e["hard"] = c.hard;
        e["value"] = c.value;
        e["tol"] = c.tol;
        if (!c.note.empty()) e["note"] = c.note;
        arr.push_back(e);
    }
    return arr;
}

void render_checks(std::ostringstream& os, const std::vector<CheckResult>& checks) {
    for (const CheckResult& c : checks) {
        os << "  [" << (c.pass ? "pass" : "FAIL") << "] " << c.name << "  value " << fmt(c.value)
           << "  tol " << fmt(c.tol) << (c.hard ? "" : "  (finding)");
        if (!c.note.empty()) os << "  " << c.note;
        os << "\n";
    }
}

// Shared skeleton: fills the envelope fields and serializes.
void finalize(RunReport& report, json& j, std::ostringstream& text,
              const std::chrono::steady_clock::time_point& t0) {
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    j["format_version"] = 1;
    j["kind"] = report.kind;
    j["checks"] = checks_to_json(report.checks);
    j["pass"] = report.pass();
    j["solver_converged"] = report.solver_converged;
    j["elapsed_ms"] = elapsed;
    report.json = j.dump(2) + "\n";
    render_checks(text, report.checks);
    text << "result: " << (report.pass() ? "pass" : "FAIL") << "\n";
    report.text = text.str();
}

json equilibrium_to_json(const EquilibriumResult& result, const Market& market,
                         const std::vector<Agent>& agents) {
    json j;
    j["prices"] = result.prices;
    json allocs = json::array();
    for (const auto& a : result.allocations) allocs.push_back(a);
    j["allocations"] = allocs;
    j["residual"] = result.residual;
    j["iterations"] = result.iterations;
    if (!result.message.empty()) j["message"] = result.message;
    json ids = json::array();
    for (const Agent& a : agents) ids.push_back(a.id);
    j["agent_ids"] = ids;
    json secs = json::array();
    for (const Security& s : market.securities()) secs.push_back(to_string(s, market.space()));
    j["securities"] = secs;
    return j;
}

}  // namespace

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str(), path);
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!doc.is_object()) throw ParseError(origin + ": top level must be an object");

    EventSpace space = parse_events(member(doc, "events", origin, "/"), origin);
    PriceVector quoted;
    Market market = parse_market(member(doc, "market", origin, "/"), space, &quoted, origin);

    const json& agents_doc = member(doc, "agents", origin, "/");
    if (!agents_doc.is_array() || agents_doc.empty()) {
        fail(origin, "/agents", "need a nonempty array of agents");
    }
    std::vector<Agent> agents;
    for (std::size_t i = 0; i < agents_doc.size(); ++i) {
        const json& a = agents_doc[i];
        const std::string ptr = "/agents/" + std::to_string(i);
        if (!a.is_object()) fail(origin, ptr, "expected an object");
        Agent agent{.id = a.contains("id") ? a.at("id").get<std::string>()
                                           : "agent" + std::to_string(i + 1),
                    .utility = parse_utility(member(a, "utility", origin, ptr), origin,
                                             ptr + "/utility"),
                    .belief = parse_belief(member(a, "belief", origin, ptr), space, origin,
                                           ptr + "/belief"),
                    .endowment = a.contains("endowment")
                                     ? parse_endowment(a.at("endowment"), space, origin,
                                                       ptr + "/endowment")
                                     : std::vector<double>(space.num_states(), 0.0)};
        // Log-utility agents must start feasible; catching this here anchors
        // the report to the file rather than to a solver failure later.
        if (agent.utility.kind() == UtilityKind::Log) {
            for (WorldState s = 0; s < space.num_states(); ++s) {
                if (agent.belief.at(s) > 0.0 && !agent.utility.feasible(agent.endowment[s])) {
                    fail(origin, ptr + "/endowment", "infeasible for log utility in state " +
                                                         std::to_string(s));
                }
            }
        }
        agents.push_back(std::move(agent));
    }

    SolverOptions solver = parse_solver(doc.contains("solver") ? doc.at("solver") : json(), origin);
    ExperimentSpec experiment =
        parse_experiment(doc.contains("experiment") ? doc.at("experiment") : json(), origin);

    std::string name = origin;
    if (doc.contains("name")) name = doc.at("name").get<std::string>();
    return Scenario{std::move(space), std::move(market), std::move(agents), std::move(quoted),
                    solver, experiment, std::move(name)};
}

std::string serialize_scenario(const Scenario& scenario) {
    json doc;
    doc["name"] = scenario.name;
    doc["events"] = scenario.space.labels();
    if (scenario.market.structure()) {
        json parents = json::array();
        for (int k = 0; k < scenario.space.size(); ++k) {
            parents.push_back(scenario.market.structure()->parents(k));
        }
        doc["market"] = json{{"dag", parents}};
    } else {
        json secs = json::array();
        for (const Security& s : scenario.market.securities()) {
            secs.push_back(to_string(s, scenario.space));
        }
        doc["market"] = json{{"securities", secs}};
    }
    if (!scenario.quoted_prices.empty()) doc["market"]["prices"] = scenario.quoted_prices;
    json agents = json::array();
    for (const Agent& agent : scenario.agents) {
        json a;
        a["id"] = agent.id;
        switch (agent.utility.kind()) {
            case UtilityKind::Linear:
                a["utility"] = json{{"kind", "linear"}};
                break;
            case UtilityKind::Exponential:
                a["utility"] = json{{"kind", "exponential"}, {"c", agent.utility.risk_aversion()}};
                break;
            case UtilityKind::Log:
                a["utility"] = json{{"kind", "log"}, {"w0", agent.utility.wealth_base()}};
                break;
        }
        a["belief"] = json{{"joint", agent.belief.table()}};
        a["endowment"] = agent.endowment;
        agents.push_back(a);
    }
    doc["agents"] = agents;
    doc["solver"] = json{{"clear_tol", scenario.solver.clear_tol},
                         {"foc_tol", scenario.solver.foc_tol},
                         {"max_iterations", scenario.solver.max_iterations},
                         {"max_demand_iterations", scenario.solver.max_demand_iterations},
                         {"oc_tol", scenario.solver.oc_tol}};
    doc["experiment"] = json{{"kind", scenario.experiment.kind}};
    return doc.dump(2) + "\n";
}

Quote parse_quote(const std::string& text, const EventSpace& space) {
    const auto eq = text.rfind('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
        throw ParseError("quote must look like \"<security>=<price>\": " + text);
    }
    Quote quote;
    quote.security = parse_security(text.substr(0, eq), space);
    try {
        std::size_t used = 0;
        quote.price = std::stod(text.substr(eq + 1), &used);
        if (used != text.size() - eq - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw ParseError("bad quote price in: " + text);
    }
    if (!(quote.price >= 0.0 && quote.price <= 1.0)) {
        throw ValidationError("quote price must lie in [0,1]: " + text);
    }
    return quote;
}

Tolerances tolerances_from_env() {
    Tolerances tol;
    const auto read = [](const char* name, double* slot) {
        if (const char* value = std::getenv(name)) {
            try {
                *slot = std::stod(value);
            } catch (const std::exception&) {
                throw ValidationError(std::string(name) + ": not a number: " + value);
            }
        }
    };
    read("BNMARKET_TOL_CLEAR", &tol.clear);
    read("BNMARKET_TOL_FOC", &tol.foc);
    read("BNMARKET_TOL_CONSENSUS", &tol.consensus);
    read("BNMARKET_TOL_IDENTITY", &tol.identity);
    read("BNMARKET_TOL_WEALTH", &tol.wealth);
    read("BNMARKET_TOL_ARB", &tol.arb);
    return tol;
}

void set_tolerance(Tolerances& tol, const std::string& name, double value) {
    if (name == "clear") {
        tol.clear = value;
    } else if (name == "foc") {
        tol.foc = value;
    } else if (name == "consensus") {
        tol.consensus = value;
    } else if (name == "identity") {
        tol.identity = value;
    } else if (name == "wealth") {
        tol.wealth = value;
    } else if (name == "arb") {
        tol.arb = value;
    } else {
        throw ValidationError("unknown tolerance '" + name +
                              "' (known: clear, foc, consensus, identity, wealth, arb)");
    }
}

bool RunReport::pass() const {
    for (const CheckResult& c : checks) {
        if (!c.pass && (c.hard || strict)) return false;
    }
    return true;
}

int RunReport::exit_code() const {
    if (!solver_converged) return 3;
    return pass() ? 0 : 1;
}

RunReport run_scenario(const Scenario& scenario, const RunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    SolverOptions solver = scenario.solver;
    solver.clear_tol = options.tol.clear;
    solver.foc_tol = options.tol.foc;
    const EquilibriumResult result = solve_equilibrium(scenario.market, scenario.agents, solver);

    RunReport report;
    report.kind = "run";
    report.strict = options.strict;
    report.solver_converged = result.converged;
    const ConsensusReport consensus = consensus_gap(result);
    const double rn_gap = rn_identity_gap(result, scenario.market);
    const CompletenessReport completeness = completeness_rank(scenario.market);

    report.checks.push_back({"solver_converged", result.converged, true, result.residual,
                             solver.clear_tol, result.message});
    report.checks.push_back(
        {"market_cleared", result.residual <= solver.clear_tol, true, result.residual,
         solver.clear_tol, ""});
    report.checks.push_back(
        {"rn_price_identity", rn_gap <= options.tol.identity, true, rn_gap, options.tol.identity, ""});
    report.checks.push_back({"rn_consensus", consensus.max_gap <= options.tol.consensus, false,
                             consensus.max_gap, options.tol.consensus,
                             "risk-neutral beliefs agree across agents"});

    json j;
    j["scenario"] = scenario.name;
    j["equilibrium"] = equilibrium_to_json(result, scenario.market, scenario.agents);
    j["consensus_gap"] = consensus.max_gap;
    j["rn_identity_gap"] = rn_gap;
    j["completeness"] = json{{"rank", completeness.rank}, {"complete", completeness.complete}};
    if (scenario.market.structure()) {
        j["state_prices"] = state_prices(result, scenario.market).table();
    }

    std::ostringstream text;
    text << "scenario " << scenario.name << " (run)\n";
    text << "market: " << scenario.market.size() << " securities"
         << (scenario.market.structure() ? " (structured)" : "") << ", rank " << completeness.rank
         << (completeness.complete ? ", complete" : ", not complete") << "\n";
    text << "solver: " << (result.converged ? "converged" : "DID NOT CONVERGE") << " after "
         << result.iterations << " iterations, residual " << fmt(result.residual) << "\n";
    text << "prices:\n";
    for (int k = 0; k < scenario.market.size(); ++k) {
        text << "  " << to_string(scenario.market.at(k), scenario.space) << " = "
             << fmt(result.prices[k]) << "\n";
    }
    text << "consensus gap " << fmt(consensus.max_gap) << ", rn identity gap " << fmt(rn_gap)
         << "\n";
    finalize(report, j, text, t0);
    return report;
}

RunReport compare_scenario(const Scenario& scenario, const RunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    SolverOptions solver = scenario.solver;
    solver.clear_tol = options.tol.clear;
    solver.foc_tol = options.tol.foc;
    solver.oc_tol = options.tol.consensus;
    const OcReport oc = verify_operational_completeness(scenario.market, scenario.agents, solver);

    RunReport report;
    report.kind = "compare";
    report.strict = options.strict;
    report.solver_converged = oc.result.converged && oc.benchmark.converged;

    bool all_cara = true;
    for (const Agent& a : scenario.agents) {
        all_cara = all_cara && a.utility.kind() == UtilityKind::Exponential;
    }

    report.checks.push_back({"compact_cleared", oc.result.converged, true, oc.result.residual,
                             solver.clear_tol, ""});
    report.checks.push_back({"benchmark_cleared", oc.benchmark.converged, true,
                             oc.benchmark.residual, solver.clear_tol, ""});
    report.checks.push_back({"operationally_complete", oc.is_oc, false, oc.consensus,
                             solver.oc_tol, ""});
    report.checks.push_back({"wealth_matches_benchmark",
                             !all_cara || oc.wealth_gap <= options.tol.wealth, false, oc.wealth_gap,
                             options.tol.wealth,
                             all_cara ? "" : "informational only for non-exponential agents"});

    json j;
    j["scenario"] = scenario.name;
    j["compact"] = equilibrium_to_json(oc.result, scenario.market, scenario.agents);
    const Market bench = complete_market(scenario.space);
    j["benchmark"] = equilibrium_to_json(oc.benchmark, bench, scenario.agents);
    j["consensus_gap"] = oc.consensus;
    j["wealth_gap"] = oc.wealth_gap;
    j["is_oc"] = oc.is_oc;
    j["security_counts"] =
        json{{"compact", scenario.market.size()}, {"benchmark", bench.size()}};

    std::ostringstream text;
    text << "scenario " << scenario.name << " (compare)\n";
    text << "compact market: " << scenario.market.size() << " securities, residual "
         << fmt(oc.result.residual) << "\n";
    text << "benchmark market: " << bench.size() << " securities, residual "
         << fmt(oc.benchmark.residual) << "\n";
    text << "consensus gap " << fmt(oc.consensus) << ", wealth gap " << fmt(oc.wealth_gap)
         << ", operationally complete: " << (oc.is_oc ? "yes" : "no") << "\n";
    finalize(report, j, text, t0);
    return report;
}

RunReport arbitrage_scenario(const Scenario& scenario, const Quote& quote,
                             const RunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!scenario.market.structure()) {
        throw ValidationError(scenario.name + ": arbitrage needs a structured market");
    }
    RunReport report;
    report.kind = "arbitrage";
    report.strict = options.strict;

    PriceVector prices = scenario.quoted_prices;
    json j;
    if (prices.empty()) {
        SolverOptions solver = scenario.solver;
        solver.clear_tol = options.tol.clear;
        solver.foc_tol = options.tol.foc;
        const EquilibriumResult result =
            solve_equilibrium(scenario.market, scenario.agents, solver);
        report.solver_converged = result.converged;
        report.checks.push_back({"solver_converged", result.converged, true, result.residual,
                                 solver.clear_tol, result.message});
        prices = result.prices;
        j["equilibrium"] = equilibrium_to_json(result, scenario.market, scenario.agents);
    } else {
        j["quoted_prices"] = prices;
    }

    const ArbitrageReport arb = detect(prices, scenario.market, quote, options.tol.arb);
    j["scenario"] = scenario.name;
    j["quote"] = json{{"security", to_string(quote.security, scenario.space)},
                      {"price", quote.price}};
    j["implied"] = arb.implied;

    std::ostringstream text;
    text << "scenario " << scenario.name << " (arbitrage)\n";
    text << "quote " << to_string(quote.security, scenario.space) << " at " << fmt(arb.quoted)
         << ", implied " << fmt(arb.implied) << "\n";
    switch (arb.kind) {
        case ArbitrageKind::None: {
            j["arbitrage"] = "none";
            report.checks.push_back({"quote_fair", true, false,
                                     std::abs(arb.quoted - arb.implied), options.tol.arb, ""});
            text << "no arbitrage: quote within tolerance of implied price\n";
            break;
        }
        case ArbitrageKind::Replicable: {
            j["arbitrage"] = "replicable";
            j["hedge"] = arb.hedge;
            j["quote_units"] = arb.quote_units;
            j["guaranteed_profit"] = arb.guaranteed_profit;
            double min_profit = std::numeric_limits<double>::infinity();
            for (WorldState s = 0; s < scenario.space.num_states(); ++s) {
                const double settled =
                    settle(quote.security, quote.price, arb.quote_units, s) +
                    portfolio_settle(scenario.market, arb.hedge, prices, s);
                min_profit = std::min(min_profit, settled);
            }
            j["min_state_profit"] = min_profit;
            report.checks.push_back({"hedge_riskless",
                                     min_profit >= arb.guaranteed_profit - 1e-10, true, min_profit,
                                     arb.guaranteed_profit - 1e-10,
                                     "settlement enumerated over all states"});
            text << "replicable mispricing: hold " << fmt(arb.quote_units)
                 << " units of the quote against the market hedge; riskless profit "
                 << fmt(arb.guaranteed_profit) << " per package\n";
            break;
        }
        case ArbitrageKind::RNProfit: {
            j["arbitrage"] = "rn_profit";
            j["direction"] = arb.direction == TradeSide::Buy ? "buy" : "sell";
            j["p_star"] = arb.p_star;
            const bool interior = (arb.quoted < arb.p_star && arb.p_star < arb.implied) ||
                                  (arb.implied < arb.p_star && arb.p_star < arb.quoted);
            report.checks.push_back(
                {"p_star_between", interior, true, arb.p_star, options.tol.arb, ""});
            text << "unreplicable mispricing: " << (arb.direction == TradeSide::Buy ? "buy" : "sell")
                 << " at the quote, resell near " << fmt(arb.p_star) << "\n";
            break;
        }
    }
    finalize(report, j, text, t0);
    return report;
}

RunReport protocol_scenario(const Scenario& scenario, const RunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    ProtocolOptions popts;
    popts.demand_eps = scenario.experiment.demand_eps;
    popts.max_rounds = scenario.experiment.max_rounds;
    popts.solver = scenario.solver;
    popts.solver.clear_tol = options.tol.clear;
    popts.solver.foc_tol = options.tol.foc;
    const ProtocolState state = run_protocol(scenario.agents, scenario.space, popts);

    RunReport report;
    report.kind = "protocol";
    report.strict = options.strict;
    report.solver_converged = state.solver_converged;

    const long structured_count = state.structure.security_count();
    const long bound = (1L << scenario.space.size()) - 1;
    report.checks.push_back({"terminated", state.completed, true,
                             static_cast<double>(state.rounds),
                             static_cast<double>(popts.max_rounds), ""});
    report.checks.push_back({"solver_converged", state.solver_converged, true, state.residual,
                             popts.solver.clear_tol, ""});
    report.checks.push_back({"structure_within_bound", structured_count <= bound, true,
                             static_cast<double>(structured_count), static_cast<double>(bound),
                             "conditional-probability count vs fully connected"});
    report.checks.push_back({"rn_consensus", state.consensus <= options.tol.consensus, false,
                             state.consensus, options.tol.consensus, ""});

    json j;
    j["scenario"] = scenario.name;
    j["rounds"] = state.rounds;
    j["completed"] = state.completed;
    j["consensus_gap"] = state.consensus;
    j["residual"] = state.residual;
    json secs = json::array();
    for (const Security& s : state.market.securities()) secs.push_back(to_string(s, scenario.space));
    j["terminal_market"] = secs;
    j["terminal_prices"] = state.prices;
    json parents = json::array();
    for (int k = 0; k < scenario.space.size(); ++k) parents.push_back(state.structure.parents(k));
    j["terminal_structure"] = parents;
    json allocs = json::array();
    for (const auto& a : state.allocations) allocs.push_back(a);
    j["terminal_allocations"] = allocs;
    json hist = json::array();
    for (const RoundRecord& r : state.history) {
        json h;
        json market = json::array();
        for (const Security& s : r.market) market.push_back(to_string(s, scenario.space));
        h["market"] = market;
        h["prices"] = r.prices;
        json created = json::array();
        for (const Security& s : r.created) created.push_back(to_string(s, scenario.space));
        h["created"] = created;
        json retracted = json::array();
        for (const Security& s : r.retracted) retracted.push_back(to_string(s, scenario.space));
        h["retracted"] = retracted;
        h["consensus_gap"] = r.consensus;
        h["residual"] = r.residual;
        h["solver_converged"] = r.solver_converged;
        hist.push_back(h);
    }
    j["history"] = hist;

    std::ostringstream text;
    text << "scenario " << scenario.name << " (protocol)\n";
    text << "rounds " << state.rounds << (state.completed ? "" : " (round cap hit)")
         << ", terminal market " << state.market.size() << " securities, consensus gap "
         << fmt(state.consensus) << "\n";
    for (std::size_t r = 0; r < state.history.size(); ++r) {
        const RoundRecord& rec = state.history[r];
        text << "  round " << r << ": " << rec.market.size() << " securities, +"
             << rec.created.size() << "/-" << rec.retracted.size() << ", consensus "
             << fmt(rec.consensus) << "\n";
    }
    finalize(report, j, text, t0);
    return report;
}

RunReport search_scenario(const Scenario& scenario, const RunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!scenario.market.structure()) {
        throw ValidationError(scenario.name + ": search needs a structured market");
    }
    UtilityKind kind;
    if (scenario.experiment.search_utility == "log") {
        kind = UtilityKind::Log;
    } else if (scenario.experiment.search_utility == "exponential") {
        kind = UtilityKind::Exponential;
    } else {
        throw ValidationError(scenario.name + ": /experiment/utility: unknown utility '" +
                              scenario.experiment.search_utility + "'");
    }
    SolverOptions solver = scenario.solver;
    solver.clear_tol = options.tol.clear;
    solver.foc_tol = options.tol.foc;
    const SearchOutcome outcome = counterexample_search(
        kind, scenario.space, *scenario.market.structure(), scenario.experiment.trials,
        scenario.experiment.seed, scenario.experiment.gap_threshold, solver,
        scenario.experiment.search_agents);

    RunReport report;
    report.kind = "search";
    report.strict = options.strict;
    report.checks.push_back({"counterexample_found", outcome.found, false, outcome.best_gap,
                             scenario.experiment.gap_threshold,
                             outcome.found ? "" : "inconclusive: no gap above threshold in budget"});

    json j;
    j["scenario"] = scenario.name;
    j["trials"] = outcome.trials_run;
    j["best_gap"] = outcome.best_gap;
    j["best_trial"] = outcome.best_trial;
    j["found"] = outcome.found;
    j["seed"] = scenario.experiment.seed;
    if (!outcome.best_scenario_json.empty()) {
        j["best_scenario"] = json::parse(outcome.best_scenario_json);
    }

    std::ostringstream text;
    text << "scenario " << scenario.name << " (search)\n";
    text << "ran " << outcome.trials_run << " trials, best consensus gap " << fmt(outcome.best_gap)
         << (outcome.found ? " (counterexample found, trial " + std::to_string(outcome.best_trial) +
                                 ")"
                           : " (inconclusive)")
         << "\n";
    finalize(report, j, text, t0);
    return report;
}

RunReport run_experiment(const Scenario& scenario, const RunOptions& options) {
    const std::string& kind = scenario.experiment.kind;
    if (kind == "run") return run_scenario(scenario, options);
    if (kind == "compare") return compare_scenario(scenario, options);
    if (kind == "protocol") return protocol_scenario(scenario, options);
    if (kind == "search") return search_scenario(scenario, options);
    throw ValidationError(scenario.name + ": experiment '" + kind +
                          "' needs its dedicated subcommand");
}

SearchOutcome counterexample_search(UtilityKind utility, const EventSpace& space,
                                    const Dag& structure, int trials, std::uint64_t seed,
                                    double threshold, const SolverOptions& solver,
                                    int num_agents) {
    if (utility == UtilityKind::Linear) {
        throw std::invalid_argument("search needs strictly risk-averse agents");
    }
    if (num_agents < 2) throw std::invalid_argument("search needs at least two agents");
    if (!(structure.space() == space)) {
        throw std::invalid_argument("structure is on a different event space");
    }
    const Market market(structure);
    const std::uint32_t n = space.num_states();

    const auto draw_population = [&](Rng& rng) {
        std::vector<Agent> agents;
        for (int i = 0; i < num_agents; ++i) {
            std::vector<Cpt> cpts;
            for (int k = 0; k < space.size(); ++k) {
                Cpt t;
                t.node = k;
                const int rows = 1 << structure.num_parents(k);
                for (int r = 0; r < rows; ++r) t.rows.push_back(rng.uniform(0.05, 0.95));
                cpts.push_back(std::move(t));
            }
            JointDistribution belief = joint_from_bn(BayesNet(structure, std::move(cpts)));
            Utility utility_fn = utility == UtilityKind::Log
                                     ? Utility::log(rng.uniform(2.0, 5.0))
                                     : Utility::exponential(rng.uniform(0.5, 2.0));
            std::vector<double> endowment(n, 0.0);
            if (utility == UtilityKind::Log) {
                // Deliberately non-separable: independent draw per state.
                for (auto& e : endowment) e = rng.uniform(-1.0, 1.0);
            } else {
                // Separable across the structure's family cliques.
                for (int k = 0; k < space.size(); ++k) {
                    const std::uint32_t clique = structure.parent_mask(k) | (1u << k);
                    std::vector<double> values(1u << static_cast<unsigned>(std::popcount(clique)));
                    for (auto& v : values) v = rng.uniform(-1.0, 1.0);
                    for (WorldState s = 0; s < n; ++s) endowment[s] += values[pack_bits(s, clique)];
                }
            }
            agents.push_back(Agent{.id = "agent" + std::to_string(i + 1),
                                   .utility = utility_fn,
                                   .belief = std::move(belief),
                                   .endowment = std::move(endowment)});
        }
        return agents;
    };

    SearchOutcome out;
    struct Trial {
        bool solved = false;
        double gap = 0.0;
        std::vector<Agent> agents;
    };
    // Trials are independent (per-trial RNG), so blocks run on all cores;
    // reducing each block in index order keeps the outcome identical to a
    // serial run, early stop included.
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int block = static_cast<int>(hw) * 4;
    for (int start = 0; start < trials && !out.found; start += block) {
        const int end = std::min(trials, start + block);
        std::vector<Trial> batch(end - start);
        std::vector<std::exception_ptr> errors(hw);
        const auto worker = [&](unsigned lane) {
            try {
                for (int t = start + static_cast<int>(lane); t < end;
                     t += static_cast<int>(hw)) {
                    Rng rng = trial_rng(seed, static_cast<std::uint64_t>(t));
                    Trial& slot = batch[t - start];
                    slot.agents = draw_population(rng);
                    EquilibriumResult result;
                    try {
                        result = solve_equilibrium(market, slot.agents, solver);
                    } catch (const std::runtime_error&) {
                        continue;  // infeasible or unbounded draw; not evidence either way
                    }
                    if (!result.converged) continue;
                    slot.solved = true;
                    slot.gap = consensus_gap(result).max_gap;
                }
            } catch (...) {
                errors[lane] = std::current_exception();
            }
        };
        std::vector<std::thread> pool;
        for (unsigned lane = 1; lane < hw; ++lane) pool.emplace_back(worker, lane);
        worker(0);
        for (auto& th : pool) th.join();
        for (const auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }
        for (int t = start; t < end && !out.found; ++t) {
            ++out.trials_run;
            Trial& slot = batch[t - start];
            if (!slot.solved) continue;
            if (slot.gap > out.best_gap) {
                out.best_gap = slot.gap;
                out.best_trial = t;
                out.best_agents = std::move(slot.agents);
            }
            if (out.best_gap > threshold) out.found = true;
        }
    }
    if (!out.best_agents.empty()) {
        Scenario best{space,
                      market,
                      out.best_agents,
                      {},
                      solver,
                      {},
                      "search-best-trial-" + std::to_string(out.best_trial)};
        out.best_scenario_json = serialize_scenario(best);
    }
    return out;
}

}  // namespace bnm
