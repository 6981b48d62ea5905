#include "fedload/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedload/errors.hpp"
#include "fedload/rng.hpp"

namespace fedload::data {

RawChannel ingest_channel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open channel file '" + path + "'");
    RawChannel channel;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::int64_t ts = 0;
        double watts = 0.0;
        if (!(fields >> ts >> watts)) {
            throw ParseError(path + ": malformed line " + std::to_string(line_no) + ": '" +
                             line + "'");
        }
        if (!std::isfinite(watts)) {
            throw ParseError(path + ": non-finite watts at line " + std::to_string(line_no));
        }
        if (!channel.timestamps.empty() && ts < channel.timestamps.back()) {
            throw ParseError(path + ": decreasing timestamp at line " +
                             std::to_string(line_no));
        }
        channel.timestamps.push_back(ts);
        channel.watts.push_back(std::max(0.0, watts));
    }
    if (channel.timestamps.empty()) {
        throw ParseError(path + ": empty channel file");
    }
    return channel;
}

std::vector<std::pair<int, std::string>> parse_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open labels file '" + path + "'");
    std::vector<std::pair<int, std::string>> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        int channel = 0;
        std::string name;
        if (!(fields >> channel >> name)) {
            throw ParseError(path + ": malformed line " + std::to_string(line_no) + ": '" +
                             line + "'");
        }
        labels.emplace_back(channel, name);
    }
    if (labels.empty()) {
        throw ParseError(path + ": empty labels file");
    }
    return labels;
}

HouseholdDataset ingest_house(const std::string& house_dir, const std::string& household_id,
                              double period, double gap_fill_limit) {
    const auto labels =
        parse_labels((std::filesystem::path(house_dir) / "labels.dat").string());
    std::vector<std::pair<std::string, RawChannel>> channels;
    channels.reserve(labels.size());
    for (const auto& [number, name] : labels) {
        const auto path = std::filesystem::path(house_dir) /
                          ("channel_" + std::to_string(number) + ".dat");
        channels.emplace_back(name, ingest_channel(path.string()));
    }
    return align_and_fill(channels, household_id, period, gap_fill_limit);
}

namespace {

std::vector<double> snap_to_grid(const RawChannel& raw, std::int64_t grid_start,
                                 std::size_t length, double period,
                                 double gap_fill_limit) {
    std::vector<double> out(length, 0.0);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < length; ++k) {
        const auto t = static_cast<double>(grid_start) + static_cast<double>(k) * period;
        while (cursor + 1 < raw.timestamps.size() &&
               static_cast<double>(raw.timestamps[cursor + 1]) <= t) {
            ++cursor;
        }
        const double sample_ts = static_cast<double>(raw.timestamps[cursor]);
        if (sample_ts > t) continue;  // before the first sample: zero
        out[k] = (t - sample_ts <= gap_fill_limit) ? raw.watts[cursor] : 0.0;
    }
    return out;
}

bool is_aggregate_name(const std::string& name) {
    return name == "aggregate" || name == "mains";
}

}  // namespace

HouseholdDataset align_and_fill(const std::vector<std::pair<std::string, RawChannel>>& channels,
                                const std::string& household_id, double period,
                                double gap_fill_limit) {
    if (channels.empty()) throw std::invalid_argument("align_and_fill: no channels");
    for (const auto& [name, raw] : channels) {
        if (raw.timestamps.empty()) {
            throw std::invalid_argument("align_and_fill: channel '" + name + "' is empty");
        }
    }
    std::int64_t latest_start = channels.front().second.timestamps.front();
    std::int64_t earliest_end = channels.front().second.timestamps.back();
    for (const auto& [name, raw] : channels) {
        latest_start = std::max(latest_start, raw.timestamps.front());
        earliest_end = std::min(earliest_end, raw.timestamps.back());
    }
    if (earliest_end < latest_start) {
        throw AlignmentError("align_and_fill: channels have no temporal overlap");
    }
    const auto length = static_cast<std::size_t>(
        std::floor(static_cast<double>(earliest_end - latest_start) / period)) + 1;

    HouseholdDataset dataset;
    dataset.household_id = household_id;
    bool have_aggregate = false;
    for (const auto& [name, raw] : channels) {
        PowerTrace trace;
        trace.start_time = latest_start;
        trace.period = period;
        trace.values = snap_to_grid(raw, latest_start, length, period, gap_fill_limit);
        if (is_aggregate_name(name)) {
            dataset.aggregate = std::move(trace);
            have_aggregate = true;
        } else {
            dataset.appliances.emplace(name, std::move(trace));
        }
    }
    if (!have_aggregate) {
        PowerTrace total;
        total.start_time = latest_start;
        total.period = period;
        total.values.assign(length, 0.0);
        for (const auto& [name, trace] : dataset.appliances) {
            for (std::size_t i = 0; i < length; ++i) total.values[i] += trace.values[i];
        }
        dataset.aggregate = std::move(total);
    }
    return dataset;
}

NormStats compute_stats(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("compute_stats: empty input");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return {*lo, *hi};
}

std::vector<double> minmax_normalize(const std::vector<double>& values,
                                     const NormStats& stats) {
    std::vector<double> out(values.size());
    if (stats.max <= stats.min) {
        return out;  // constant channel: all zeros
    }
    const double span = stats.max - stats.min;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - stats.min) / span;
    return out;
}

std::vector<double> denormalize(const std::vector<double>& values, const NormStats& stats) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = denormalize_value(values[i], stats);
    return out;
}

double denormalize_value(double value, const NormStats& stats) {
    if (stats.max <= stats.min) return stats.min;
    return stats.min + value * (stats.max - stats.min);
}

std::vector<Sample> make_windows(const std::vector<double>& values, std::size_t window_len,
                                 std::size_t horizon) {
    if (window_len == 0 || horizon == 0) {
        throw std::invalid_argument("make_windows: window_len and horizon must be positive");
    }
    if (values.size() < window_len + horizon) {
        throw ShapeError("make_windows: series of length " + std::to_string(values.size()) +
                         " too short for window " + std::to_string(window_len) +
                         " + horizon " + std::to_string(horizon));
    }
    const std::size_t count = values.size() - window_len - horizon + 1;
    std::vector<Sample> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> window(values.begin() + i, values.begin() + i + window_len);
        samples.push_back({Tensor({window_len}, std::move(window)),
                           values[i + window_len + horizon - 1]});
    }
    return samples;
}

namespace {

PowerTrace slice_trace(const PowerTrace& trace, std::size_t offset, std::size_t count) {
    PowerTrace out;
    out.start_time = trace.timestamp_at(offset);
    out.period = trace.period;
    out.values.assign(trace.values.begin() + offset, trace.values.begin() + offset + count);
    return out;
}

}  // namespace

std::pair<HouseholdDataset, HouseholdDataset> split_train_test(const HouseholdDataset& dataset,
                                                               const SplitSpec& spec) {
    if (spec.train_minutes <= 0.0 || spec.test_minutes <= 0.0) {
        throw std::invalid_argument("split_train_test: minutes must be positive");
    }
    const double period = dataset.aggregate.period;
    const auto n_train =
        static_cast<std::size_t>(std::llround(spec.train_minutes * 60.0 / period));
    const auto n_test =
        static_cast<std::size_t>(std::llround(spec.test_minutes * 60.0 / period));
    if (n_train + n_test > dataset.aggregate.size()) {
        throw std::invalid_argument("split_train_test: split needs " +
                                    std::to_string(n_train + n_test) + " samples, trace has " +
                                    std::to_string(dataset.aggregate.size()));
    }
    HouseholdDataset train, test;
    train.household_id = dataset.household_id;
    test.household_id = dataset.household_id;
    train.aggregate = slice_trace(dataset.aggregate, 0, n_train);
    test.aggregate = slice_trace(dataset.aggregate, n_train, n_test);
    for (const auto& [name, trace] : dataset.appliances) {
        train.appliances.emplace(name, slice_trace(trace, 0, n_train));
        test.appliances.emplace(name, slice_trace(trace, n_train, n_test));
    }
    return {std::move(train), std::move(test)};
}

HouseholdDataset synth_household(const SynthConfig& config) {
    if (config.appliances.empty()) {
        throw ConfigError("synth_household: appliances must be non-empty");
    }
    if (config.length == 0) throw ConfigError("synth_household: length must be positive");
    for (const auto& app : config.appliances) {
        if (app.rated_power < 0.0) {
            throw ConfigError("synth_household: rated_power must be >= 0 for '" + app.name + "'");
        }
        if (app.p_on_to_off < 0.0 || app.p_on_to_off > 1.0 || app.p_off_to_on < 0.0 ||
            app.p_off_to_on > 1.0) {
            throw ConfigError("synth_household: transition probabilities must be in [0,1] for '" +
                              app.name + "'");
        }
        if (app.cycle && (app.cycle->period_steps == 0 || app.cycle->duty < 0.0 ||
                          app.cycle->duty > 1.0)) {
            throw ConfigError("synth_household: invalid cycle for '" + app.name + "'");
        }
    }

    HouseholdDataset dataset;
    dataset.household_id = config.household_id;
    dataset.aggregate.start_time = config.start_time;
    dataset.aggregate.period = config.period;
    dataset.aggregate.values.assign(config.length, 0.0);

    for (std::size_t a = 0; a < config.appliances.size(); ++a) {
        const SynthAppliance& app = config.appliances[a];
        // Each appliance draws from its own substream so adding appliances
        // does not perturb the others.
        Rng rng(Rng::mix(config.seed, a));
        PowerTrace trace;
        trace.start_time = config.start_time;
        trace.period = config.period;
        trace.values.resize(config.length);
        bool on = false;
        for (std::size_t k = 0; k < config.length; ++k) {
            if (app.cycle) {
                const std::size_t pos = (k + app.cycle->phase) % app.cycle->period_steps;
                on = static_cast<double>(pos) <
                     app.cycle->duty * static_cast<double>(app.cycle->period_steps);
            } else {
                const double u = rng.uniform();
                if (on && u < app.p_on_to_off) on = false;
                else if (!on && u < app.p_off_to_on) on = true;
            }
            const double noise = app.noise_std > 0.0 ? app.noise_std * rng.gaussian() : 0.0;
            trace.values[k] = on ? std::max(0.0, app.rated_power + noise) : std::fabs(noise);
        }
        if (!dataset.appliances.emplace(app.name, std::move(trace)).second) {
            throw ConfigError("synth_household: duplicate appliance name '" + app.name + "'");
        }
    }
    // Accumulate in map (name-sorted) order so the aggregate equals a
    // re-summation over the stored channels bit for bit.
    for (const auto& [name, trace] : dataset.appliances) {
        for (std::size_t k = 0; k < config.length; ++k) {
            dataset.aggregate.values[k] += trace.values[k];
        }
    }
    return dataset;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
        out << contents;
    }
    std::filesystem::rename(tmp, path);
}

void dataset_to_csv(const HouseholdDataset& dataset, const std::string& path) {
    std::ostringstream out;
    out.precision(17);
    out << "timestamp,aggregate";
    for (const auto& [name, trace] : dataset.appliances) out << "," << name;
    out << "\n";
    for (std::size_t i = 0; i < dataset.aggregate.size(); ++i) {
        out << dataset.aggregate.timestamp_at(i) << "," << dataset.aggregate.values[i];
        for (const auto& [name, trace] : dataset.appliances) out << "," << trace.values[i];
        out << "\n";
    }
    write_file_atomic(path, out.str());
}

HouseholdDataset dataset_from_csv(const std::string& path, const std::string& household_id) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file '" + path + "'");
    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ": empty dataset file");

    std::vector<std::string> columns;
    std::istringstream header_fields(header);
    std::string column;
    while (std::getline(header_fields, column, ',')) columns.push_back(column);
    if (columns.size() < 2 || columns[0] != "timestamp" || columns[1] != "aggregate") {
        throw ParseError(path + ": expected header 'timestamp,aggregate,...', got '" + header +
                         "'");
    }

    std::vector<std::int64_t> timestamps;
    std::vector<std::vector<double>> series(columns.size() - 1);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell;
        if (!std::getline(fields, cell, ',')) {
            throw ParseError(path + ": malformed line " + std::to_string(line_no));
        }
        try {
            timestamps.push_back(std::stoll(cell));
            for (std::size_t c = 0; c + 1 < columns.size(); ++c) {
                if (!std::getline(fields, cell, ',')) {
                    throw ParseError(path + ": missing column at line " +
                                     std::to_string(line_no));
                }
                series[c].push_back(std::stod(cell));
            }
        } catch (const std::invalid_argument&) {
            throw ParseError(path + ": malformed number at line " + std::to_string(line_no));
        }
    }
    if (timestamps.empty()) throw ParseError(path + ": dataset has no rows");

    double period = 6.0;
    if (timestamps.size() > 1) {
        period = static_cast<double>(timestamps[1] - timestamps[0]);
    }
    HouseholdDataset dataset;
    dataset.household_id = household_id;
    dataset.aggregate.start_time = timestamps.front();
    dataset.aggregate.period = period;
    dataset.aggregate.values = std::move(series[0]);
    for (std::size_t c = 2; c < columns.size(); ++c) {
        PowerTrace trace;
        trace.start_time = timestamps.front();
        trace.period = period;
        trace.values = std::move(series[c - 1]);
        dataset.appliances.emplace(columns[c], std::move(trace));
    }
    return dataset;
}

}  // namespace fedload::data
