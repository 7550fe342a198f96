#include "fundus/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>
#include <variant>

namespace fundus {

namespace {

using Slot = std::variant<int*, double*, std::uint64_t*, bool*, std::string*>;

struct Entry {
    std::string key;
    Slot slot;
};

std::vector<Entry> bind(PipelineConfig& c) {
    return {
        {"preprocess.clahe_tiles", &c.preprocess.clahe_tiles},
        {"preprocess.clahe_clip", &c.preprocess.clahe_clip},
        {"preprocess.gamma_min", &c.preprocess.gamma_min},
        {"preprocess.gamma_max", &c.preprocess.gamma_max},
        {"preprocess.sharpen_strength", &c.preprocess.sharpen_strength},
        {"preprocess.sharpen_threshold", &c.preprocess.sharpen_threshold},
        {"seeds.sigma", &c.seeds.filter.sigma},
        {"seeds.support", &c.seeds.filter.support},
        {"seeds.open_radius", &c.seeds.open_radius},
        {"seeds.min_side", &c.seeds.min_side},
        {"calibrate.median_window", &c.calibrate.median_window},
        {"calibrate.mask_threshold", &c.calibrate.mask_threshold},
        {"calibrate.min_coverage", &c.calibrate.min_coverage},
        {"calibrate.border_radius", &c.calibrate.border_radius},
        {"calibrate.search_margin", &c.calibrate.search_margin},
        {"swat.max_iter", &c.swat.max_iter},
        {"svm.C", &c.svm.C},
        {"svm.seed", &c.svm.seed},
        {"svm.epochs", &c.svm.epochs},
        {"svm.class_weighting", &c.svm.class_weighting},
        {"eval.test_count", &c.eval.test_count},
        {"eval.split_seed", &c.eval.split_seed},
        {"eval.min_overlap", &c.eval.min_overlap},
        {"eval.gt_consensus", &c.eval.gt_consensus},
        {"run.downscale", &c.downscale},
        {"run.workers", &c.workers},
        {"run.cache_dir", &c.cache_dir},
    };
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) throw Error("config " + key + ": cannot parse \"" + v + "\"");
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

Entry& find(std::vector<Entry>& entries, const std::string& key) {
    for (auto& e : entries)
        if (e.key == key) return e;
    throw Error("unknown config key: " + key);
}

}  // namespace

std::vector<std::string> config_keys() {
    PipelineConfig c;
    std::vector<std::string> keys;
    for (const auto& e : bind(c)) keys.push_back(e.key);
    return keys;
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& raw) {
    auto entries = bind(cfg);
    Entry& e = find(entries, key);
    const std::string v = trim(raw);
    std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>) {
                if (v == "true" || v == "1" || v == "yes")
                    *p = true;
                else if (v == "false" || v == "0" || v == "no")
                    *p = false;
                else
                    throw Error("config " + key + ": expected a boolean, got \"" + v + "\"");
            } else if constexpr (std::is_same_v<T, std::string>) {
                *p = v;
            } else {
                *p = parse_number<T>(key, v);
            }
        },
        e.slot);
}

std::string get_config_value(const PipelineConfig& cfg, const std::string& key) {
    PipelineConfig copy = cfg;
    auto entries = bind(copy);
    const Entry& e = find(entries, key);
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>)
                return *p ? "true" : "false";
            else if constexpr (std::is_same_v<T, std::string>)
                return *p;
            else if constexpr (std::is_same_v<T, double>)
                return format_double(*p);
            else
                return std::to_string(*p);
        },
        e.slot);
}

PipelineConfig parse_config(const std::string& text, PipelineConfig cfg) {
    std::istringstream in(text);
    std::string line, section;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw Error("config line " + std::to_string(n) + ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(n) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        std::string value = t.substr(eq + 1);
        // An inline comment starts at a marker that follows whitespace.
        for (std::size_t i = 1; i < value.size(); ++i)
            if ((value[i] == '#' || value[i] == ';') && (value[i - 1] == ' ' || value[i - 1] == '\t')) {
                value.resize(i);
                break;
            }
        const std::string full = section.empty() ? key : section + "." + key;
        try {
            set_config_value(cfg, full, value);
        } catch (const Error& e) {
            throw Error("config line " + std::to_string(n) + ": " + e.what());
        }
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path, PipelineConfig base) {
    return parse_config(read_file(path), std::move(base));
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw Error("override must look like key=value: " + assignment);
    set_config_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void validate_config(const PipelineConfig& c) {
    c.preprocess.validate();
    if (!(c.seeds.filter.sigma > 0.0)) throw Error("seeds.sigma must be > 0");
    if (!(c.seeds.filter.support >= 3.0)) throw Error("seeds.support must be >= 3");
    if (c.seeds.open_radius < 1) throw Error("seeds.open_radius must be >= 1");
    if (c.seeds.min_side < 1) throw Error("seeds.min_side must be >= 1");
    if (c.calibrate.median_window < 3 || c.calibrate.median_window % 2 == 0)
        throw Error("calibrate.median_window must be odd and >= 3");
    if (c.calibrate.mask_threshold < 0 || c.calibrate.mask_threshold > 254)
        throw Error("calibrate.mask_threshold must be in [0,254]");
    if (!(c.calibrate.min_coverage > 0.0 && c.calibrate.min_coverage <= 1.0))
        throw Error("calibrate.min_coverage must be in (0,1]");
    if (c.calibrate.border_radius < 0) throw Error("calibrate.border_radius must be >= 0");
    if (c.calibrate.search_margin < 0) throw Error("calibrate.search_margin must be >= 0");
    if (c.swat.max_iter < 1) throw Error("swat.max_iter must be >= 1");
    if (!(c.svm.C > 0.0)) throw Error("svm.C must be > 0");
    if (c.svm.epochs < 0) throw Error("svm.epochs must be >= 0");
    if (c.eval.test_count < 1) throw Error("eval.test_count must be >= 1");
    if (!(c.eval.min_overlap > 0.0 && c.eval.min_overlap <= 1.0)) throw Error("eval.min_overlap must be in (0,1]");
    if (!(c.eval.gt_consensus >= 0.0 && c.eval.gt_consensus <= 1.0))
        throw Error("eval.gt_consensus must be in [0,1]");
    if (c.downscale < 1) throw Error("run.downscale must be >= 1");
    if (c.workers < 1) throw Error("run.workers must be >= 1");
}

std::string config_to_ini(const PipelineConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& key : config_keys()) {
        const auto dot = key.find('.');
        const std::string s = key.substr(0, dot);
        if (s != section) {
            if (!section.empty()) out << '\n';
            out << '[' << s << "]\n";
            section = s;
        }
        out << key.substr(dot + 1) << " = " << get_config_value(cfg, key) << '\n';
    }
    return out.str();
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
    PipelineConfig copy = cfg;
    nlohmann::json j = nlohmann::json::object();
    for (const auto& e : bind(copy)) {
        const auto dot = e.key.find('.');
        auto& node = j[e.key.substr(0, dot)][e.key.substr(dot + 1)];
        std::visit([&](auto* p) { node = *p; }, e.slot);
    }
    return j;
}

std::uint64_t config_hash(const PipelineConfig& cfg, const std::vector<std::string>& sections) {
    std::string text;
    for (const auto& key : config_keys()) {
        const std::string s = key.substr(0, key.find('.'));
        for (const auto& want : sections)
            if (s == want) text += key + "=" + get_config_value(cfg, key) + "\n";
    }
    return fnv1a(text);
}

}  // namespace fundus
