#include "drift/pipeline/config.hpp"

#include "drift/core/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace drift {
namespace pt = boost::property_tree;

namespace {

std::string format_double(double v) {
    for (int precision = 6; precision <= 17; ++precision) {
        std::ostringstream os;
        os.precision(precision);
        os << v;
        if (std::stod(os.str()) == v) {
            return os.str();
        }
    }
    return std::to_string(v);
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += (i ? "," : "") + items[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) {
            out.push_back(item.substr(b, e - b + 1));
        }
    }
    return out;
}

template <typename E>
E parse_enum(const std::string& text, std::initializer_list<std::pair<const char*, E>> names, const char* what) {
    for (const auto& [name, value] : names) {
        if (text == name) {
            return value;
        }
    }
    std::string expected;
    for (const auto& [name, value] : names) {
        expected += std::string(expected.empty() ? "" : ", ") + name;
    }
    throw ConfigError(std::string("invalid ") + what + " '" + text + "' (expected " + expected + ")");
}

RefinementMode parse_refinement(const std::string& s) {
    return parse_enum<RefinementMode>(
        s, {{"none", RefinementMode::none}, {"segmenter", RefinementMode::segmenter}, {"crf", RefinementMode::crf}},
        "refinement mode");
}

PromptMode parse_prompt(const std::string& s) {
    return parse_enum<PromptMode>(s,
                                  {{"null", PromptMode::null},
                                   {"class", PromptMode::class_name},
                                   {"caption", PromptMode::caption},
                                   {"learned", PromptMode::learned}},
                                  "prompt mode");
}

InversionMode parse_inversion(const std::string& s) {
    return parse_enum<InversionMode>(
        s, {{"ddim", InversionMode::ddim}, {"random", InversionMode::random_noise}, {"none", InversionMode::none}},
        "inversion mode");
}

KernelMode parse_kernel(const std::string& s) {
    return parse_enum<KernelMode>(s, {{"attention", KernelMode::attention}, {"cosine", KernelMode::cosine}},
                                  "kernel mode");
}

Precision parse_precision(const std::string& s) {
    return parse_enum<Precision>(s, {{"f32", Precision::f32}, {"f64", Precision::f64}}, "precision");
}

pt::ptree to_tree(const RunConfig& c) {
    pt::ptree t;
    auto d = [](double v) { return format_double(v); };
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    t.put("backend.kind", c.backend.kind);
    t.put("backend.layers", join(c.backend.layers));
    t.put("backend.weights", c.backend.weights.string());
    t.put("backend.seed", c.backend.seed);
    t.put("backend.heads", c.backend.heads);
    t.put("backend.head_dim", c.backend.head_dim);
    t.put("backend.stride", c.backend.stride);
    t.put("backend.content_gain", d(c.backend.content_gain));
    t.put("backend.positional_gain", d(c.backend.positional_gain));
    t.put("backend.prompt_gain", d(c.backend.prompt_gain));
    t.put("segmenter.kind", c.segmenter.kind);
    t.put("segmenter.weights", c.segmenter.weights.string());
    t.put("inversion.mode", to_string(c.inversion));
    t.put("inversion.timestep", c.timestep);
    t.put("inversion.steps", c.inversion_steps);
    t.put("kernel.mode", to_string(c.kernel));
    t.put("kernel.history", c.history);
    t.put("kernel.radius", d(c.radius));
    t.put("kernel.top_k", c.top_k);
    t.put("kernel.block_rows", c.block_rows);
    t.put("kernel.cosine_temperature", d(c.cosine_temperature));
    t.put("prompt.mode", to_string(c.prompt));
    t.put("prompt.dir", c.prompt_dir.string());
    t.put("optimizer.learning_rate", d(c.optimizer.learning_rate));
    t.put("optimizer.steps", c.optimizer.steps);
    t.put("optimizer.beta1", d(c.optimizer.beta1));
    t.put("optimizer.beta2", d(c.optimizer.beta2));
    t.put("optimizer.epsilon", d(c.optimizer.epsilon));
    t.put("optimizer.optimize_prompt", b(c.optimizer.optimize_prompt));
    t.put("optimizer.optimize_heads", b(c.optimizer.optimize_heads));
    t.put("optimizer.precision", std::string(c.optimizer.precision == Precision::f64 ? "f64" : "f32"));
    t.put("refine.mode", to_string(c.refinement));
    t.put("refine.points", c.points);
    t.put("refine.sets", c.point_sets);
    t.put("refine.crf_kernel", c.crf.kernel_size);
    t.put("refine.crf_steps", c.crf.steps);
    t.put("refine.crf_confidence", d(c.crf.confidence));
    t.put("refine.crf_compatibility", d(c.crf.compatibility));
    t.put("refine.crf_color_sigma", d(c.crf.color_sigma));
    t.put("refine.crf_spatial_sigma", d(c.crf.spatial_sigma));
    t.put("run.seed", c.seed);
    t.put("run.cache_dir", c.cache_dir.string());
    t.put("run.output_dir", c.output_dir.string());
    t.put("run.workers", c.workers);
    t.put("run.boundary_tolerance", d(c.boundary_tolerance));
    return t;
}

template <typename T>
T get(const pt::ptree& t, const std::string& key) {
    const std::string raw = t.get<std::string>(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") {
                return true;
            }
            if (raw == "false" || raw == "0" || raw == "no" || raw == "off") {
                return false;
            }
            throw ConfigError("");
        } else {
            return t.get<T>(key);
        }
    } catch (const std::exception&) {
        throw ConfigError("config: invalid value '" + raw + "' for " + key);
    }
}

RunConfig from_tree(const pt::ptree& t) {
    const pt::ptree defaults = to_tree(RunConfig{});
    for (const auto& [section, body] : t) {
        if (defaults.find(section) == defaults.not_found()) {
            throw ConfigError("config: unknown section [" + section + "]");
        }
        for (const auto& [key, value] : body) {
            if (!defaults.get_child_optional(section + "." + key)) {
                throw ConfigError("config: unknown key " + section + "." + key);
            }
        }
    }
    pt::ptree merged = defaults;
    for (const auto& [section, body] : t) {
        for (const auto& [key, value] : body) {
            merged.put(section + "." + key, value.data());
        }
    }
    RunConfig c;
    c.backend.kind = get<std::string>(merged, "backend.kind");
    c.backend.layers = split(get<std::string>(merged, "backend.layers"));
    c.backend.weights = get<std::string>(merged, "backend.weights");
    c.backend.seed = get<std::uint64_t>(merged, "backend.seed");
    c.backend.heads = get<int>(merged, "backend.heads");
    c.backend.head_dim = get<int>(merged, "backend.head_dim");
    c.backend.stride = get<int>(merged, "backend.stride");
    c.backend.content_gain = get<double>(merged, "backend.content_gain");
    c.backend.positional_gain = get<double>(merged, "backend.positional_gain");
    c.backend.prompt_gain = get<double>(merged, "backend.prompt_gain");
    c.segmenter.kind = get<std::string>(merged, "segmenter.kind");
    c.segmenter.weights = get<std::string>(merged, "segmenter.weights");
    c.inversion = parse_inversion(get<std::string>(merged, "inversion.mode"));
    c.timestep = get<int>(merged, "inversion.timestep");
    c.inversion_steps = get<int>(merged, "inversion.steps");
    c.kernel = parse_kernel(get<std::string>(merged, "kernel.mode"));
    c.history = get<int>(merged, "kernel.history");
    c.radius = get<double>(merged, "kernel.radius");
    c.top_k = get<int>(merged, "kernel.top_k");
    c.block_rows = get<int>(merged, "kernel.block_rows");
    c.cosine_temperature = get<double>(merged, "kernel.cosine_temperature");
    c.prompt = parse_prompt(get<std::string>(merged, "prompt.mode"));
    c.prompt_dir = get<std::string>(merged, "prompt.dir");
    c.optimizer.learning_rate = get<double>(merged, "optimizer.learning_rate");
    c.optimizer.steps = get<int>(merged, "optimizer.steps");
    c.optimizer.beta1 = get<double>(merged, "optimizer.beta1");
    c.optimizer.beta2 = get<double>(merged, "optimizer.beta2");
    c.optimizer.epsilon = get<double>(merged, "optimizer.epsilon");
    c.optimizer.optimize_prompt = get<bool>(merged, "optimizer.optimize_prompt");
    c.optimizer.optimize_heads = get<bool>(merged, "optimizer.optimize_heads");
    c.optimizer.precision = parse_precision(get<std::string>(merged, "optimizer.precision"));
    c.refinement = parse_refinement(get<std::string>(merged, "refine.mode"));
    c.points = get<int>(merged, "refine.points");
    c.point_sets = get<int>(merged, "refine.sets");
    c.crf.kernel_size = get<int>(merged, "refine.crf_kernel");
    c.crf.steps = get<int>(merged, "refine.crf_steps");
    c.crf.confidence = get<double>(merged, "refine.crf_confidence");
    c.crf.compatibility = get<double>(merged, "refine.crf_compatibility");
    c.crf.color_sigma = get<double>(merged, "refine.crf_color_sigma");
    c.crf.spatial_sigma = get<double>(merged, "refine.crf_spatial_sigma");
    c.seed = get<std::uint64_t>(merged, "run.seed");
    c.cache_dir = get<std::string>(merged, "run.cache_dir");
    c.output_dir = get<std::string>(merged, "run.output_dir");
    c.workers = get<int>(merged, "run.workers");
    c.boundary_tolerance = get<double>(merged, "run.boundary_tolerance");
    c.validate();
    return c;
}

} // namespace

std::string to_string(RefinementMode m) {
    switch (m) {
    case RefinementMode::none:
        return "none";
    case RefinementMode::segmenter:
        return "segmenter";
    case RefinementMode::crf:
        return "crf";
    }
    return "?";
}

std::string to_string(PromptMode m) {
    switch (m) {
    case PromptMode::null:
        return "null";
    case PromptMode::class_name:
        return "class";
    case PromptMode::caption:
        return "caption";
    case PromptMode::learned:
        return "learned";
    }
    return "?";
}

std::string to_string(InversionMode m) {
    switch (m) {
    case InversionMode::ddim:
        return "ddim";
    case InversionMode::random_noise:
        return "random";
    case InversionMode::none:
        return "none";
    }
    return "?";
}

std::string to_string(KernelMode m) {
    return m == KernelMode::attention ? "attention" : "cosine";
}

void RunConfig::validate() const {
    auto positive = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError("config: " + what);
        }
    };
    positive(backend.kind == "synthetic" || backend.kind == "torchscript",
             "backend.kind must be synthetic or torchscript");
    positive(segmenter.kind == "torchscript" || segmenter.kind == "oracle",
             "segmenter.kind must be torchscript or oracle");
    positive(!backend.layers.empty(), "backend.layers must name at least one layer");
    positive(backend.heads > 0 && backend.head_dim > 0 && backend.stride > 0,
             "backend heads, head_dim and stride must be positive");
    positive(timestep >= 0 && timestep < 1000, "inversion.timestep must lie in [0, 1000)");
    positive(inversion_steps > 0 && inversion_steps <= 1000, "inversion.steps must lie in [1, 1000]");
    positive(history >= 0, "kernel.history must be nonnegative");
    positive(radius > 0.0, "kernel.radius must be positive");
    positive(top_k > 0, "kernel.top_k must be positive");
    positive(block_rows > 0, "kernel.block_rows must be positive");
    positive(cosine_temperature > 0.0, "kernel.cosine_temperature must be positive");
    positive(points > 0 && point_sets > 0, "refine.points and refine.sets must be positive");
    positive(workers > 0, "run.workers must be positive");
    positive(boundary_tolerance > 0.0, "run.boundary_tolerance must be positive");
    optimizer.validate();
    crf.validate();
}

RunConfig parse_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return from_tree(tree);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str());
}

std::string to_ini(const RunConfig& config) {
    std::ostringstream os;
    pt::write_ini(os, to_tree(config));
    return os.str();
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments) {
    pt::ptree tree = to_tree(config);
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || a.find('.') > eq) {
            throw ConfigError("override '" + a + "' is not of the form section.key=value");
        }
        const std::string key = a.substr(0, eq);
        if (!tree.get_child_optional(key)) {
            throw ConfigError("config: unknown key " + key);
        }
        tree.put(key, a.substr(eq + 1));
    }
    config = from_tree(tree);
}

} // namespace drift
