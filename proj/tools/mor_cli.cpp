#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "mor/mor.hpp"
#include "synth.hpp"

using namespace mor;
using json = nlohmann::json;

namespace {

struct Settings {
    sim::AccelConfig accel;
    sim::CostModel cost;
    double threshold = default_threshold;
    std::size_t calibration_samples = default_calibration_samples;
};

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key))
        out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (const auto& [k, _] : j.items()) {
        bool known = false;
        for (const char* name : keys)
            known = known || k == name;
        if (!known)
            throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

Settings load_settings(const std::string& path) {
    Settings s;
    if (path.empty())
        return s;
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        reject_unknown(j, {"accelerator", "cost", "threshold", "calibration_samples"}, "config");
        read_field(j, "threshold", s.threshold);
        read_field(j, "calibration_samples", s.calibration_samples);
        if (j.contains("accelerator")) {
            const auto& a = j.at("accelerator");
            reject_unknown(a,
                           {"num_cus", "cu_width", "num_bincus", "bincu_width", "input_sram_bytes",
                            "binweight_sram_bytes", "cu_buffer_bytes", "member_fifo_entries", "frequency_mhz", "dram"},
                           "accelerator");
            read_field(a, "num_cus", s.accel.num_cus);
            read_field(a, "cu_width", s.accel.cu_width);
            read_field(a, "num_bincus", s.accel.num_bincus);
            read_field(a, "bincu_width", s.accel.bincu_width);
            read_field(a, "input_sram_bytes", s.accel.input_sram_bytes);
            read_field(a, "binweight_sram_bytes", s.accel.binweight_sram_bytes);
            read_field(a, "cu_buffer_bytes", s.accel.cu_buffer_bytes);
            read_field(a, "member_fifo_entries", s.accel.member_fifo_entries);
            read_field(a, "frequency_mhz", s.accel.frequency_mhz);
            if (a.contains("dram")) {
                const auto& d = a.at("dram");
                reject_unknown(d, {"port_width_bytes", "burst_bytes", "latency_cycles", "bandwidth_bytes_per_cycle", "ideal"},
                               "accelerator.dram");
                read_field(d, "port_width_bytes", s.accel.dram.port_width_bytes);
                read_field(d, "burst_bytes", s.accel.dram.burst_bytes);
                read_field(d, "latency_cycles", s.accel.dram.latency_cycles);
                read_field(d, "bandwidth_bytes_per_cycle", s.accel.dram.bandwidth_bytes_per_cycle);
                read_field(d, "ideal", s.accel.dram.ideal);
            }
        }
        if (j.contains("cost")) {
            const auto& c = j.at("cost");
            reject_unknown(c,
                           {"mac", "binary_op", "input_sram_byte", "binweight_sram_byte", "cu_buffer_byte", "dram_byte",
                            "static_per_cycle"},
                           "cost");
            read_field(c, "mac", s.cost.mac);
            read_field(c, "binary_op", s.cost.binary_op);
            read_field(c, "input_sram_byte", s.cost.input_sram_byte);
            read_field(c, "binweight_sram_byte", s.cost.binweight_sram_byte);
            read_field(c, "cu_buffer_byte", s.cost.cu_buffer_byte);
            read_field(c, "dram_byte", s.cost.dram_byte);
            read_field(c, "static_per_cycle", s.cost.static_per_cycle);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field has the wrong type: ") + e.what());
    }
    s.accel.validate();
    s.cost.validate();
    if (!(s.threshold >= 0.0 && s.threshold <= 1.0))
        throw ConfigError("threshold must lie in [0, 1]");
    return s;
}

std::vector<QuantTensor> load_samples(const std::string& path, const QuantModel& model) {
    auto samples = io::split_samples(io::load_tensor(path), model.input_scale);
    for (const auto& s : samples)
        if (s.shape() != model.input_shape)
            throw ConfigError("sample shape does not match the model input");
    return samples;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-")
        return std::cout;
    file.open(path, std::ios::trunc);
    if (!file)
        throw ConfigError("cannot write " + path);
    return file;
}

HybridEngine make_engine(const io::ModelBundle& b) {
    if (!b.table)
        throw ConfigError("model has no predictor parameters; run calibrate first");
    if (!b.plan)
        throw ConfigError("model has no cluster plan; run cluster first");
    return HybridEngine(b.model, *b.plan, *b.table);
}

std::vector<double> parse_thresholds(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty())
            continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size())
                throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ConfigError("bad threshold '" + cell + "'");
        }
    }
    if (out.empty())
        throw ConfigError("threshold list is empty");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-output prediction toolkit: calibration, clustering, inference and accelerator simulation"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    std::string config_path;
    bool oracle = false;
    app.add_option("--seed", seed, "Seed for synthetic data");
    app.add_option("--config", config_path, "JSON file with accelerator, cost and threshold settings");
    app.add_flag("--oracle", oracle, "Label every output against the reference (quadrant counts)");

    std::string model_in, model_out, samples_in, out_path;
    double threshold = -1;

    auto* synth = app.add_subcommand("synth", "Write a synthetic model and sample file");
    std::string kind = "sparse";
    std::size_t count = 64;
    tools::SynthOptions so;
    std::string widths = "64,64,64,10";
    synth->add_option("--kind", kind, "sparse or random")->check(CLI::IsMember({"sparse", "random"}));
    synth->add_option("--model", model_out, "Output container")->required();
    synth->add_option("--samples", samples_in, "Output sample tensor file")->required();
    synth->add_option("--count", count, "Number of samples")->check(CLI::PositiveNumber);
    synth->add_option("--groups", so.groups, "sparse: neuron groups")->check(CLI::PositiveNumber);
    synth->add_option("--per-group", so.per_group, "sparse: neurons per group")->check(CLI::PositiveNumber);
    synth->add_option("--fan-in", so.fan_in, "sparse: inputs per neuron")->check(CLI::PositiveNumber);
    synth->add_option("--widths", widths, "random: comma-separated layer widths, input first");

    auto* calibrate = app.add_subcommand("calibrate", "Fit per-neuron binary predictors");
    calibrate->add_option("--model", model_in, "Input container")->required();
    calibrate->add_option("--samples", samples_in, "Calibration sample tensor file")->required();
    calibrate->add_option("--threshold", threshold, "Correlation threshold T");
    calibrate->add_option("--out", model_out, "Output container")->required();

    auto* cluster = app.add_subcommand("cluster", "Group neurons by weight-vector angle");
    double max_angle = -1;
    cluster->add_option("--model", model_in, "Input container")->required();
    cluster->add_option("--max-angle", max_angle, "Largest angle in degrees allowed inside a cluster");
    cluster->add_option("--out", model_out, "Output container")->required();

    auto* run = app.add_subcommand("run", "Run inference with zero prediction and print per-sample counters");
    std::string mode = "hybrid";
    run->add_option("--model", model_in, "Calibrated and clustered container")->required();
    run->add_option("--samples", samples_in, "Input tensor file")->required();
    run->add_option("--threshold", threshold, "Correlation threshold T");
    run->add_option("--mode", mode, "hybrid, binary_only or cluster_only")
        ->check(CLI::IsMember({"hybrid", "binary_only", "cluster_only"}));
    run->add_option("--out", out_path, "CSV output (default stdout)");

    auto* simc = app.add_subcommand("sim", "Simulate the accelerator and write run statistics");
    std::string predictor = "on";
    simc->add_option("--model", model_in, "Calibrated and clustered container")->required();
    simc->add_option("--samples", samples_in, "Input tensor file")->required();
    simc->add_option("--threshold", threshold, "Correlation threshold T");
    simc->add_option("--predictor", predictor, "on or off")->check(CLI::IsMember({"on", "off"}));
    simc->add_option("--out", out_path, "Statistics CSV (default stdout)");

    auto* sweep = app.add_subcommand("sweep", "Operations saved and errors across thresholds");
    std::string thresholds;
    unsigned threads = 1;
    sweep->add_option("--model", model_in, "Calibrated and clustered container")->required();
    sweep->add_option("--samples", samples_in, "Input tensor file")->required();
    sweep->add_option("--thresholds", thresholds, "Comma-separated thresholds")->required();
    sweep->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--out", out_path, "CSV output (default stdout)");

    auto* report = app.add_subcommand("report", "Compare a predictor-off run with a predictor-on run");
    std::string baseline, candidate, csv_out;
    report->add_option("--baseline", baseline, "Statistics of the predictor-off run")->required();
    report->add_option("--candidate", candidate, "Statistics of the predictor-on run")->required();
    report->add_option("--csv", csv_out, "Also write the comparison as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        const Settings settings = load_settings(config_path);
        const double T = threshold >= 0 ? threshold : settings.threshold;
        if (!(T >= 0.0 && T <= 1.0))
            throw ConfigError("threshold must lie in [0, 1]");

        if (*synth) {
            tools::SynthWorkload w;
            if (kind == "sparse") {
                w = tools::sparse_workload(seed, count, so);
            } else {
                std::vector<std::uint32_t> ws;
                for (double v : parse_thresholds(widths)) {
                    if (v < 1 || v != std::floor(v))
                        throw ConfigError("layer widths must be positive integers");
                    ws.push_back(static_cast<std::uint32_t>(v));
                }
                w = tools::random_workload(seed, count, ws);
            }
            io::save_model(model_out, {w.model, std::nullopt, std::nullopt});
            io::save_tensor(samples_in, io::stack_samples(w.samples));
            std::cout << "wrote " << model_out << " (" << w.model.layers.size() << " layers) and " << samples_in
                      << " (" << w.samples.size() << " samples)\n";
        } else if (*calibrate) {
            auto b = io::load_model(model_in);
            auto samples = load_samples(samples_in, b.model);
            if (samples.size() > settings.calibration_samples)
                samples.resize(settings.calibration_samples);
            b.table = calibrate_model(b.model, samples, T);
            io::save_model(model_out, b);
            std::size_t enabled = 0, total = 0;
            for (const auto& l : b.table->layers)
                for (const auto& p : l) {
                    enabled += p.enabled;
                    ++total;
                }
            std::cout << "calibrated " << total << " neurons on " << samples.size() << " samples; " << enabled
                      << " enabled at T=" << T << "\n";
        } else if (*cluster) {
            auto b = io::load_model(model_in);
            std::optional<double> limit;
            if (max_angle >= 0)
                limit = max_angle;
            b.plan = cluster_model(b.model, limit);
            io::save_model(model_out, b);
            for (std::size_t l = 0; l < b.plan->layers.size(); ++l) {
                const auto& lc = b.plan->layers[l];
                std::cout << "layer " << l << ": " << lc.clusters.size() << " clusters, " << lc.member_count()
                          << " members, " << lc.singletons.size() << " singletons\n";
            }
        } else if (*run) {
            const auto b = io::load_model(model_in);
            const auto engine = make_engine(b);
            const auto samples = load_samples(samples_in, b.model);
            HybridConfig hc;
            hc.threshold = T;
            hc.oracle = oracle;
            hc.mode = mode == "hybrid" ? PredictorMode::hybrid
                      : mode == "binary_only" ? PredictorMode::binary_only
                                              : PredictorMode::cluster_only;
            std::ofstream file;
            std::ostream& os = open_out(out_path, file);
            os << "sample,macs_executed,macs_skipped,binary_evals,top1,reference_top1";
            if (oracle)
                for (std::size_t k = 0; k < outcome_kinds; ++k)
                    os << ',' << outcome_name(static_cast<Outcome>(k));
            os << '\n';
            OutcomeCounts total;
            std::uint64_t executed = 0, skipped = 0;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const auto r = engine.run(samples[i], hc);
                const auto ref = forward_reference(b.model, samples[i]);
                std::uint64_t evals = 0;
                for (const auto& l : r.layers)
                    evals += l.binary_evals;
                os << i << ',' << r.macs_executed() << ',' << r.macs_skipped() << ',' << evals << ','
                   << top1(r.activations.layers.back().out) << ',' << top1(ref.layers.back().out);
                if (oracle) {
                    const auto c = r.counts();
                    for (std::size_t k = 0; k < outcome_kinds; ++k)
                        os << ',' << c[static_cast<Outcome>(k)];
                    total += c;
                }
                os << '\n';
                executed += r.macs_executed();
                skipped += r.macs_skipped();
            }
            std::cerr << "ops saved " << (executed + skipped ? 100.0 * double(skipped) / double(executed + skipped) : 0.0)
                      << "%";
            if (oracle)
                std::cerr << ", incorrect zeros " << total[Outcome::incorrect_zero];
            std::cerr << "\n";
        } else if (*simc) {
            const auto b = io::load_model(model_in);
            const auto engine = make_engine(b);
            const auto samples = load_samples(samples_in, b.model);
            const bool on = predictor == "on";
            const auto rs = sim::simulate(engine, samples, settings.accel, settings.cost, {.predictor = on, .threshold = T});
            std::ofstream file;
            std::ostream& os = open_out(out_path, file);
            io::write_stats(os, io::make_record(rs, io::model_hash(b), on, T, settings.accel));
        } else if (*sweep) {
            const auto b = io::load_model(model_in);
            const auto engine = make_engine(b);
            const auto samples = load_samples(samples_in, b.model);
            const auto result = run_sweep(engine, samples, parse_thresholds(thresholds), threads);
            std::ofstream file;
            write_sweep_csv(open_out(out_path, file), result);
        } else if (*report) {
            std::ifstream a(baseline), c(candidate);
            if (!a)
                throw ConfigError("cannot open " + baseline);
            if (!c)
                throw ConfigError("cannot open " + candidate);
            const auto off = io::read_stats(a);
            const auto on = io::read_stats(c);
            const auto rep = compare_runs(off, on);
            write_report_text(std::cout, rep);
            if (!csv_out.empty()) {
                std::ofstream file;
                write_report_csv(open_out(csv_out, file), rep);
            }
        }
    } catch (const ParseError& e) {
        std::cerr << "error: malformed input: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
