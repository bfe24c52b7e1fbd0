#include "g2sim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "g2sim/errors.hpp"

namespace g2sim {

using nlohmann::json;

namespace {

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

// Object view that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    // A present key counts as consumed even when null, which means "use the default".
    bool has(const std::string& key) {
        if (!j_.contains(key)) return false;
        used_.insert(key);
        return !j_.at(key).is_null();
    }
    std::string path(const std::string& key) const { return join(path_, key); }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(path(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(path(key), "must be finite");
        return x;
    }

    double required_number(const std::string& key) {
        if (!has(key)) throw ConfigError(path(key), "required field missing");
        return number(key, 0.0);
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            const double x = v.get<double>();
            if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 9.2e18) return static_cast<std::int64_t>(x);
        }
        throw ConfigError(path(key), "expected an integer");
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        throw ConfigError(path(key), "expected a non-negative integer");
    }

    bool boolean(const std::string& key, bool fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        if (!j_.at(key).is_boolean()) throw ConfigError(path(key), "expected true or false");
        return j_.at(key).get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        used_.insert(key);
        if (!has(key)) return fallback;
        if (!j_.at(key).is_string()) throw ConfigError(path(key), "expected a string");
        return j_.at(key).get<std::string>();
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) throw ConfigError(path(key), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) throw ConfigError(path, what);
}

DetectorParams read_detector(const json& j, const std::string& path, DetectorParams d) {
    Reader r(j, path);
    d.efficiency = r.number("efficiency", d.efficiency);
    d.jitter_sigma = r.number("jitter_sigma", d.jitter_sigma);
    d.dark_rate = r.number("dark_rate", d.dark_rate);
    d.dead_time = r.integer("dead_time", d.dead_time);
    d.delay = r.integer("delay", d.delay);
    r.finish();
    return d;
}

DetectorParams resolve_detector(const json& j, const std::string& path, const DetectorPresets& presets) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "snspd1") return presets.snspd1;
        if (name == "snspd2") return presets.snspd2;
        if (name == "pmt1") return presets.pmt1;
        if (name == "pmt2") return presets.pmt2;
        throw ConfigError(path, "unknown detector preset '" + name + "'");
    }
    return read_detector(j, path, DetectorParams{});
}

const char* kind_name(SourceKind k) { return k == SourceKind::QuantumDot ? "quantum_dot" : "coherent"; }

json detector_json(const DetectorParams& d) {
    return json{{"efficiency", d.efficiency},
                {"jitter_sigma", d.jitter_sigma},
                {"dark_rate", d.dark_rate},
                {"dead_time", d.dead_time},
                {"delay", d.delay}};
}

PipelineConfig parse_root(const json& root) {
    Reader r(root, "");
    PipelineConfig c;

    const auto version = r.integer("schema_version", -1);
    if (version != kConfigSchemaVersion) {
        throw ConfigError("schema_version", "expected " + std::to_string(kConfigSchemaVersion));
    }

    c.seed = r.unsigned_integer("seed", 0);
    c.duration = r.integer("duration", 0);
    c.segment_duration = r.integer("segment_duration", c.segment_duration);
    c.pump_power = r.number("pump_power", c.pump_power);
    c.pump_power_rel_sigma = r.number("pump_power_rel_sigma", c.pump_power_rel_sigma);
    c.coupler_loss = r.number("coupler_loss", c.coupler_loss);
    c.conversion_enabled = r.boolean("conversion_enabled", c.conversion_enabled);
    c.filter_enabled = r.boolean("filter_enabled", c.filter_enabled);
    c.fuse_thinning = r.boolean("fuse_thinning", c.fuse_thinning);
    if (r.has("temperature")) c.temperature = r.number("temperature", 0.0);
    else r.number("temperature", 0.0);

    c.source.kind = SourceKind::Coherent;
    c.source.rate = 0.0;
    if (r.has("source")) {
        Reader s(r.raw("source"), "source");
        const auto kind = s.string("kind", "");
        if (kind == "quantum_dot") {
            c.source.kind = SourceKind::QuantumDot;
        } else if (kind == "coherent") {
            c.source.kind = SourceKind::Coherent;
        } else {
            throw ConfigError("source.kind", "expected \"quantum_dot\" or \"coherent\"");
        }
        c.source.rate = s.required_number("rate");
        if (c.source.kind == SourceKind::QuantumDot) {
            if (!s.has("params")) throw ConfigError("source.params", "required for a quantum_dot source");
            Reader p(s.raw("params"), "source.params");
            auto& e = c.source.params;
            e.tau_rad = p.required_number("tau_rad");
            e.wavelength = p.number("wavelength", kBiexcitonWavelengthNm);
            e.background_fraction = p.number("background_fraction", 0.0);
            const bool explicit_refill = p.has("reexcite_rate");
            const double refill = p.number("reexcite_rate", 0.0);
            p.finish();
            require(e.tau_rad > 0.0, "source.params.tau_rad", "must be positive");
            require(c.source.rate >= 0.0, "source.rate", "must be non-negative");
            if (c.source.rate > 0.0) {
                try {
                    e.reexcite_rate = refill_rate_for(c.source.rate, e.tau_rad);
                } catch (const InvalidArgument& ex) {
                    throw ConfigError("source.rate", ex.what());
                }
                if (explicit_refill) {
                    require(std::fabs(refill - e.reexcite_rate) <= 1e-6 * e.reexcite_rate, "source.params.reexcite_rate",
                            "inconsistent with rate and tau_rad (expected " + std::to_string(e.reexcite_rate) + ")");
                }
            }
        } else {
            c.source.params.wavelength = s.number("wavelength", kBiexcitonWavelengthNm);
        }
        s.finish();
    }

    if (r.has("conversion")) {
        Reader s(r.raw("conversion"), "conversion");
        auto& p = c.conversion;
        p.eta_slope = s.number("eta_slope", p.eta_slope);
        p.device_slope = s.number("device_slope", p.device_slope);
        p.lambda_center = s.number("lambda_center", p.lambda_center);
        p.lambda_fwhm = s.number("lambda_fwhm", p.lambda_fwhm);
        p.temp_center = s.number("temp_center", p.temp_center);
        p.temp_fwhm = s.number("temp_fwhm", p.temp_fwhm);
        p.pump_lambda = s.number("pump_lambda", p.pump_lambda);
        s.finish();
    }
    if (r.has("uspdc")) {
        Reader s(r.raw("uspdc"), "uspdc");
        auto& p = c.uspdc;
        p.ref_rate = s.number("ref_rate", p.ref_rate);
        p.ref_power = s.number("ref_power", p.ref_power);
        p.spectrum_center = s.number("spectrum_center", p.spectrum_center);
        p.spectrum_fwhm = s.number("spectrum_fwhm", p.spectrum_fwhm);
        s.finish();
    }
    if (r.has("filter")) {
        Reader s(r.raw("filter"), "filter");
        auto& f = c.filter;
        f.center = s.number("center", f.center);
        f.fwhm = s.number("fwhm", f.fwhm);
        f.peak_transmission = s.number("peak_transmission", f.peak_transmission);
        f.background_suppression = s.number("background_suppression", f.background_suppression);
        s.finish();
    }

    DetectorPresets presets;
    if (r.has("detectors")) {
        Reader s(r.raw("detectors"), "detectors");
        if (s.has("snspd1")) presets.snspd1 = read_detector(s.raw("snspd1"), "detectors.snspd1", presets.snspd1);
        if (s.has("snspd2")) presets.snspd2 = read_detector(s.raw("snspd2"), "detectors.snspd2", presets.snspd2);
        if (s.has("pmt1")) presets.pmt1 = read_detector(s.raw("pmt1"), "detectors.pmt1", presets.pmt1);
        if (s.has("pmt2")) presets.pmt2 = read_detector(s.raw("pmt2"), "detectors.pmt2", presets.pmt2);
        s.finish();
    }
    c.hbt = {presets.pmt1, presets.pmt2, 0.5};
    if (r.has("hbt")) {
        Reader s(r.raw("hbt"), "hbt");
        if (s.has("det1")) c.hbt.det1 = resolve_detector(s.raw("det1"), "hbt.det1", presets);
        if (s.has("det2")) c.hbt.det2 = resolve_detector(s.raw("det2"), "hbt.det2", presets);
        c.hbt.split_ratio = s.number("split_ratio", c.hbt.split_ratio);
        s.finish();
    }

    if (r.has("correlation")) {
        Reader s(r.raw("correlation"), "correlation");
        auto& k = c.correlation;
        k.bin_width = s.integer("bin_width", k.bin_width);
        k.tau_min = s.integer("tau_min", k.tau_min);
        k.tau_max = s.integer("tau_max", k.tau_max);
        k.exclusion_halfwidth = s.integer("exclusion_halfwidth", k.exclusion_halfwidth);
        s.finish();
    }

    if (r.has("fit")) {
        Reader s(r.raw("fit"), "fit");
        const auto model = s.string("model", "eq2");
        if (model == "eq1") {
            c.fit.model = FitModel::Eq1;
        } else if (model == "eq2") {
            c.fit.model = FitModel::Eq2;
        } else {
            throw ConfigError("fit.model", "expected \"eq1\" or \"eq2\"");
        }
        c.fit.sigma = s.number("sigma", c.fit.sigma);
        c.fit.t0 = s.number("t0", c.fit.t0);
        s.finish();
    }

    if (r.has("power_sweep")) {
        const json& sw = r.raw("power_sweep");
        if (!sw.is_array()) throw ConfigError("power_sweep", "expected an array of pump powers");
        for (std::size_t i = 0; i < sw.size(); ++i) {
            if (!sw[i].is_number()) throw ConfigError("power_sweep[" + std::to_string(i) + "]", "expected a number");
            c.power_sweep.push_back(sw[i].get<double>());
        }
    } else {
        r.number("power_sweep", 0.0);
    }

    r.finish();
    c.source.duration = c.duration;
    c.source.seed = c.seed;
    validate_config(c);
    return c;
}

}  // namespace

void validate_config(const PipelineConfig& c) {
    require(c.duration > 0, "duration", "must be positive");
    require(c.segment_duration > 0, "segment_duration", "must be positive");
    require(c.pump_power >= 0.0, "pump_power", "must be non-negative");
    require(c.pump_power_rel_sigma >= 0.0 && c.pump_power_rel_sigma < 1.0, "pump_power_rel_sigma", "must lie in [0, 1)");
    require(c.coupler_loss >= 0.0 && c.coupler_loss < 1.0, "coupler_loss", "must lie in [0, 1)");
    for (std::size_t i = 0; i < c.power_sweep.size(); ++i) {
        require(c.power_sweep[i] >= 0.0, "power_sweep[" + std::to_string(i) + "]", "must be non-negative");
    }

    require(c.source.rate >= 0.0, "source.rate", "must be non-negative");
    require(c.source.params.wavelength > 0.0, c.source.kind == SourceKind::QuantumDot ? "source.params.wavelength" : "source.wavelength",
            "must be positive");
    if (c.has_source() && c.source.kind == SourceKind::QuantumDot) {
        const auto& e = c.source.params;
        require(e.tau_rad > 0.0, "source.params.tau_rad", "must be positive");
        require(e.background_fraction >= 0.0 && e.background_fraction < 1.0, "source.params.background_fraction",
                "must lie in [0, 1)");
        require(e.reexcite_rate > 0.0, "source.params.reexcite_rate", "must be positive");
    }

    const auto& p = c.conversion;
    require(p.eta_slope > 0.0, "conversion.eta_slope", "must be positive");
    require(p.device_slope >= 0.0, "conversion.device_slope", "must be non-negative");
    require(p.device_slope <= p.eta_slope, "conversion.device_slope", "must not exceed eta_slope");
    require(p.lambda_center > 0.0, "conversion.lambda_center", "must be positive");
    require(p.lambda_fwhm > 0.0, "conversion.lambda_fwhm", "must be positive");
    require(p.temp_center > 0.0, "conversion.temp_center", "must be positive");
    require(p.temp_fwhm > 0.0, "conversion.temp_fwhm", "must be positive");
    require(p.pump_lambda > 0.0, "conversion.pump_lambda", "must be positive");
    if (c.temperature) require(*c.temperature > 0.0, "temperature", "must be positive");

    require(c.uspdc.ref_rate >= 0.0, "uspdc.ref_rate", "must be non-negative");
    require(c.uspdc.ref_power > 0.0, "uspdc.ref_power", "must be positive");
    require(c.uspdc.spectrum_fwhm > 0.0, "uspdc.spectrum_fwhm", "must be positive");

    require(c.filter.fwhm > 0.0, "filter.fwhm", "must be positive");
    require(c.filter.peak_transmission > 0.0 && c.filter.peak_transmission <= 1.0, "filter.peak_transmission",
            "must lie in (0, 1]");
    require(c.filter.background_suppression >= 1.0, "filter.background_suppression", "must be >= 1");
    if (c.conversion_enabled && c.filter_enabled) {
        require(p.device_slope <= p.eta_slope * c.filter.peak_transmission, "conversion.device_slope",
                "must not exceed eta_slope * filter.peak_transmission");
    }

    const auto check_det = [](const DetectorParams& d, const std::string& base) {
        require(d.efficiency > 0.0 && d.efficiency <= 1.0, base + ".efficiency", "must lie in (0, 1]");
        require(d.jitter_sigma >= 0.0, base + ".jitter_sigma", "must be non-negative");
        require(d.dark_rate >= 0.0, base + ".dark_rate", "must be non-negative");
        require(d.dead_time >= 0, base + ".dead_time", "must be non-negative");
    };
    check_det(c.hbt.det1, "hbt.det1");
    check_det(c.hbt.det2, "hbt.det2");
    require(c.hbt.split_ratio > 0.0 && c.hbt.split_ratio < 1.0, "hbt.split_ratio", "must lie in (0, 1)");

    const auto& k = c.correlation;
    require(k.bin_width > 0, "correlation.bin_width", "must be positive");
    require(k.tau_min < k.tau_max, "correlation.tau_max", "must exceed tau_min");
    require((k.tau_max - k.tau_min) % k.bin_width == 0, "correlation.bin_width", "must divide tau_max - tau_min");
    require(k.exclusion_halfwidth >= 0 && -k.exclusion_halfwidth > k.tau_min && k.exclusion_halfwidth < k.tau_max,
            "correlation.exclusion_halfwidth", "exclusion zone must lie strictly inside [tau_min, tau_max]");
    require(k.tau_max - k.tau_min < c.segment_duration, "segment_duration", "must exceed the correlation range");

    if (c.fit.model == FitModel::Eq2) require(c.fit.sigma > 0.0, "fit.sigma", "must be positive for eq2");
}

PipelineConfig parse_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    if (root.is_object() && root.contains("manifest_version")) {
        if (!root.contains("config")) throw ConfigError("config", "manifest carries no config snapshot");
        return parse_root(root.at("config"));
    }
    return parse_root(root);
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(e.path, path.string() + ": " + (e.path.empty() ? e.what() : std::string(e.what()).substr(e.path.size() + 2)));
    }
}

std::string config_to_json(const PipelineConfig& c, int indent) {
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["seed"] = c.seed;
    j["duration"] = c.duration;
    j["segment_duration"] = c.segment_duration;
    j["pump_power"] = c.pump_power;
    j["pump_power_rel_sigma"] = c.pump_power_rel_sigma;
    j["power_sweep"] = c.power_sweep;
    j["coupler_loss"] = c.coupler_loss;
    j["conversion_enabled"] = c.conversion_enabled;
    j["filter_enabled"] = c.filter_enabled;
    j["fuse_thinning"] = c.fuse_thinning;
    j["temperature"] = c.crystal_temperature();

    if (c.has_source()) {
        json s{{"kind", kind_name(c.source.kind)}, {"rate", c.source.rate}};
        if (c.source.kind == SourceKind::QuantumDot) {
            const auto& e = c.source.params;
            s["params"] = json{{"tau_rad", e.tau_rad},
                               {"reexcite_rate", e.reexcite_rate},
                               {"wavelength", e.wavelength},
                               {"background_fraction", e.background_fraction}};
        } else {
            s["wavelength"] = c.source.params.wavelength;
        }
        j["source"] = s;
    } else {
        j["source"] = nullptr;
    }

    const auto& p = c.conversion;
    j["conversion"] = json{{"eta_slope", p.eta_slope},         {"device_slope", p.device_slope},
                           {"lambda_center", p.lambda_center}, {"lambda_fwhm", p.lambda_fwhm},
                           {"temp_center", p.temp_center},     {"temp_fwhm", p.temp_fwhm},
                           {"pump_lambda", p.pump_lambda}};
    j["uspdc"] = json{{"ref_rate", c.uspdc.ref_rate},
                      {"ref_power", c.uspdc.ref_power},
                      {"spectrum_center", c.uspdc.spectrum_center},
                      {"spectrum_fwhm", c.uspdc.spectrum_fwhm}};
    j["filter"] = json{{"center", c.filter.center},
                       {"fwhm", c.filter.fwhm},
                       {"peak_transmission", c.filter.peak_transmission},
                       {"background_suppression", c.filter.background_suppression}};
    j["hbt"] = json{{"det1", detector_json(c.hbt.det1)},
                    {"det2", detector_json(c.hbt.det2)},
                    {"split_ratio", c.hbt.split_ratio}};
    const auto& k = c.correlation;
    j["correlation"] = json{{"bin_width", k.bin_width},
                            {"tau_min", k.tau_min},
                            {"tau_max", k.tau_max},
                            {"exclusion_halfwidth", k.exclusion_halfwidth}};
    j["fit"] = json{{"model", c.fit.model == FitModel::Eq1 ? "eq1" : "eq2"}, {"sigma", c.fit.sigma}, {"t0", c.fit.t0}};
    return j.dump(indent);
}

}  // namespace g2sim
