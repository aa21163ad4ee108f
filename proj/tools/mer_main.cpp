// mer: simulate a beacon chain, index its rewards, and report MER analytics.

#include <mer/mer.h>

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace {

struct Flags
{
    std::string config;
    std::optional<std::string> seed;
    std::optional<std::string> validators;
    std::optional<std::string> epochs;
    std::optional<std::string> split_epoch;
    std::optional<std::string> out;
    std::optional<std::string> provider;
    std::optional<std::string> base_url;
    std::optional<std::string> deposits;
    std::optional<std::string> entities;
    std::optional<std::string> first_epoch;
    std::optional<std::string> last_epoch;
    std::vector<std::string> sets;
    std::string host = "127.0.0.1";
    int port = 0;
};

int report_failure(char const *what, mer_status status)
{
    std::fprintf(stderr, "mer: %s failed (%s): %s\n", what, mer_status_name(status), mer_last_error());
    return static_cast<int>(status);
}

int configure(mer_run *run, Flags const &flags)
{
    if (!flags.config.empty()) {
        if (auto const s = mer_run_load_config(run, flags.config.c_str()); s != MER_OK) {
            return report_failure("loading config", s);
        }
    }
    std::pair<char const *, std::optional<std::string> const *> const overrides[] = {
        {"seed", &flags.seed},
        {"validators", &flags.validators},
        {"epochs", &flags.epochs},
        {"split_epoch", &flags.split_epoch},
        {"out", &flags.out},
        {"provider", &flags.provider},
        {"base_url", &flags.base_url},
        {"deposits", &flags.deposits},
        {"entities", &flags.entities},
        {"first_epoch", &flags.first_epoch},
        {"last_epoch", &flags.last_epoch},
    };
    for (auto const &[key, value] : overrides) {
        if (*value) {
            if (auto const s = mer_run_set(run, key, (*value)->c_str()); s != MER_OK) {
                return report_failure("applying flags", s);
            }
        }
    }
    for (auto const &assignment : flags.sets) {
        auto const eq = assignment.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "mer: --set expects key=value, got '%s'\n", assignment.c_str());
            return MER_ERR_INVALID_CONFIG;
        }
        auto const key = assignment.substr(0, eq);
        auto const value = assignment.substr(eq + 1);
        if (auto const s = mer_run_set(run, key.c_str(), value.c_str()); s != MER_OK) {
            return report_failure("applying --set", s);
        }
    }
    if (auto const s = mer_run_validate(run); s != MER_OK) {
        return report_failure("validating config", s);
    }
    return 0;
}

int run_command(mer_run *run, char const *name, mer_status (*command)(mer_run *))
{
    auto const status = command(run);
    std::fputs(mer_run_messages(run), stdout);
    if (status != MER_OK) {
        return report_failure(name, status);
    }
    return 0;
}

int serve(mer_run *run, Flags const &flags)
{
    mer_server *server = nullptr;
    if (auto const s = mer_server_start(run, flags.host.c_str(), flags.port, &server); s != MER_OK) {
        return report_failure("serve", s);
    }
    std::printf("serving beacon states on http://%s:%d\n", flags.host.c_str(), mer_server_port(server));
    std::fflush(stdout);
    mer_server_wait(server);
    mer_server_destroy(server);
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Maximum extractable reward indexer"};
    app.require_subcommand(1);
    Flags flags;

    app.add_option("--config", flags.config, "Config file of key = value lines")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", flags.seed, "Simulation seed");
    app.add_option("--validators", flags.validators, "Genesis validator count");
    app.add_option("--epochs", flags.epochs, "Epochs to simulate");
    app.add_option("--split-epoch", flags.split_epoch, "Epoch splitting the missed-block comparison");
    app.add_option("--out", flags.out, "Run directory");
    app.add_option("--provider", flags.provider, "State provider: sim, files or http");
    app.add_option("--base-url", flags.base_url, "Beacon HTTP base URL for provider http");
    app.add_option("--deposits", flags.deposits, "deposits.csv (validator_index,deposit_address)");
    app.add_option("--entities", flags.entities, "entities.csv (deposit_address,entity_name)");
    app.add_option("--first-epoch", flags.first_epoch, "First epoch to index");
    app.add_option("--last-epoch", flags.last_epoch, "Last epoch to index");
    app.add_option("--set", flags.sets, "Any config key as key=value; repeatable");

    auto *simulate = app.add_subcommand("simulate", "Write state fixtures for a seeded run");
    auto *analyze = app.add_subcommand("analyze", "Index rewards into the ledger store");
    auto *report = app.add_subcommand("report", "Export metrics and the summary");
    auto *full = app.add_subcommand("full", "simulate, analyze and report");
    auto *serve_cmd = app.add_subcommand("serve", "Serve states over the beacon HTTP shape");
    serve_cmd->add_option("--host", flags.host, "Bind address");
    serve_cmd->add_option("--port", flags.port, "Port (0 picks a free one)");
    for (auto *sub : {simulate, analyze, report, full, serve_cmd}) {
        sub->fallthrough();
    }

    CLI11_PARSE(app, argc, argv);

    mer_run *run = nullptr;
    if (auto const s = mer_run_create(&run); s != MER_OK) {
        return report_failure("init", s);
    }
    int rc = configure(run, flags);
    if (rc == 0) {
        if (simulate->parsed()) {
            rc = run_command(run, "simulate", &mer_cmd_simulate);
        }
        else if (analyze->parsed()) {
            rc = run_command(run, "analyze", &mer_cmd_analyze);
        }
        else if (report->parsed()) {
            rc = run_command(run, "report", &mer_cmd_report);
        }
        else if (full->parsed()) {
            rc = run_command(run, "full", &mer_cmd_full);
        }
        else {
            rc = serve(run, flags);
        }
    }
    mer_run_destroy(run);
    return rc;
}
