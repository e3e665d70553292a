#include "saft/config.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace saft {

ClassScope parse_class_scope(const std::string& name) {
    if (name == "heldout") return ClassScope::Heldout;
    if (name == "seen") return ClassScope::Seen;
    if (name == "all") return ClassScope::All;
    throw ConfigError("unknown class scope '" + name + "' (expected heldout, seen or all)");
}

std::string to_string(ClassScope s) {
    switch (s) {
        case ClassScope::Heldout: return "heldout";
        case ClassScope::Seen: return "seen";
        case ClassScope::All: break;
    }
    return "all";
}

AttackConfig DiagonalSection::default_attack() {
    AttackConfig c;
    c.steps = 20;
    c.loss = AttackLoss::TemplateDissimilarity;
    return c;
}

double parse_fraction(const std::string& text) {
    const auto slash = text.find('/');
    std::size_t used = 0;
    try {
        if (slash == std::string::npos) {
            const double v = std::stod(text, &used);
            if (used == text.size()) return v;
        } else {
            const auto num = text.substr(0, slash);
            const auto den = text.substr(slash + 1);
            std::size_t used_den = 0;
            const double n = std::stod(num, &used);
            const double d = std::stod(den, &used_den);
            if (used == num.size() && used_den == den.size() && d != 0) return n / d;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("cannot read '" + text + "' as a number or fraction");
}

std::string short_hash(std::string_view text) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("internal", "sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < 8; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return short_hash(ss.str());
}

namespace {

// Walks one TOML table, remembering which keys were read so leftovers can be
// reported as unknown.
class Reader {
public:
    Reader(const toml::table& t, std::string path) : t_(t), path_(std::move(path)) {}

    // Rejects keys that were never looked up.
    void finish() const {
        for (const auto& [k, v] : t_) {
            if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown key '" + qualify(std::string(k.str())) + "'");
        }
    }

    const toml::node* find(const std::string& key) {
        seen_.insert(key);
        return t_.get(key);
    }

    template <typename Fn>
    void section(const std::string& key, Fn fn) {
        const auto* n = find(key);
        if (!n) return;
        if (!n->is_table()) throw ConfigError("'" + qualify(key) + "' must be a table");
        Reader sub(*n->as_table(), qualify(key));
        fn(sub);
        sub.finish();
    }

    void get(const std::string& key, bool& out) {
        if (const auto* n = find(key)) {
            if (!n->is_boolean()) type_error(key, "a boolean");
            out = n->as_boolean()->get();
        }
    }

    void get(const std::string& key, int& out) {
        if (const auto* n = find(key)) out = to_int(*n, key);
    }

    void get(const std::string& key, std::uint64_t& out) {
        if (const auto* n = find(key)) {
            if (!n->is_integer() || n->as_integer()->get() < 0) type_error(key, "a non-negative integer");
            out = static_cast<std::uint64_t>(n->as_integer()->get());
        }
    }

    void get(const std::string& key, double& out) {
        if (const auto* n = find(key)) out = to_double(*n, key);
    }

    // Numbers or fraction strings such as "1/255".
    void get_fraction(const std::string& key, double& out) {
        if (const auto* n = find(key)) {
            if (n->is_string()) {
                try {
                    out = parse_fraction(n->as_string()->get());
                } catch (const ConfigError& e) {
                    throw ConfigError(qualify(key) + ": " + e.what());
                }
            } else {
                out = to_double(*n, key);
            }
        }
    }

    void get(const std::string& key, std::string& out) {
        if (const auto* n = find(key)) out = to_string(*n, key);
    }

    void get(const std::string& key, std::vector<std::string>& out) {
        if (const auto* n = find(key)) {
            out.clear();
            for (const auto& e : array(*n, key)) out.push_back(to_string(e, key));
        }
    }

    void get(const std::string& key, std::vector<int>& out) {
        if (const auto* n = find(key)) {
            out.clear();
            for (const auto& e : array(*n, key)) out.push_back(to_int(e, key));
        }
    }

    template <typename T, typename Parse>
    void get_enum(const std::string& key, T& out, Parse parse) {
        if (const auto* n = find(key)) {
            try {
                out = parse(to_string(*n, key));
            } catch (const ConfigError& e) {
                throw ConfigError(qualify(key) + ": " + e.what());
            }
        }
    }

    std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    [[noreturn]] void type_error(const std::string& key, const char* what) const {
        throw ConfigError("'" + qualify(key) + "' must be " + what);
    }

    const toml::array& array(const toml::node& n, const std::string& key) const {
        if (!n.is_array()) type_error(key, "an array");
        return *n.as_array();
    }

    int to_int(const toml::node& n, const std::string& key) const {
        if (!n.is_integer()) type_error(key, "an integer");
        const auto v = n.as_integer()->get();
        if (v < INT32_MIN || v > INT32_MAX) type_error(key, "a 32-bit integer");
        return static_cast<int>(v);
    }

    double to_double(const toml::node& n, const std::string& key) const {
        if (n.is_floating_point()) return n.as_floating_point()->get();
        if (n.is_integer()) return static_cast<double>(n.as_integer()->get());
        type_error(key, "a number");
    }

    std::string to_string(const toml::node& n, const std::string& key) const {
        if (!n.is_string()) type_error(key, "a string");
        return n.as_string()->get();
    }

    const toml::table& t_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_attack(Reader& r, AttackConfig& a) {
    r.get_fraction("epsilon", a.epsilon);
    r.get("steps", a.steps);
    if (r.find("alpha")) {
        double alpha = 0;
        r.get_fraction("alpha", alpha);
        a.alpha = alpha;
    }
    r.get_enum("init", a.init, parse_attack_init);
    r.get_enum("loss", a.loss, parse_attack_loss);
    r.get("logit_scale", a.logit_scale);
    r.get("restarts", a.restarts);
}

void read_config(const toml::table& root, RunConfig& c) {
    Reader r(root, "");
    r.get("seed", c.seed);
    r.get("threads", c.threads);
    r.get("out", c.out);

    r.section("data", [&](Reader& s) {
        auto& d = c.data.spec;
        s.get("classes", d.classes);
        s.get("heldout", d.heldout);
        s.get("image_size", d.image_size);
        s.get("samples_per_class", d.samples_per_class);
        s.get("position_jitter", d.position_jitter);
        s.get("scale_jitter", d.scale_jitter);
        s.get("noise", d.noise);
        s.get("test_fraction", d.test_fraction);
        s.get("external_train", c.data.external_train);
        s.get("external_test", c.data.external_test);
    });
    r.section("text", [&](Reader& s) {
        s.get("embed_dim", c.text.embed_dim);
        s.get("ngram_size", c.text.ngram_size);
        s.get("template", c.text.template_pattern);
    });
    r.section("encoder", [&](Reader& s) {
        std::vector<int> hidden;
        s.get("hidden", hidden);
        if (s.find("hidden")) c.encoder.hidden.assign(hidden.begin(), hidden.end());
        s.get_enum("activation", c.encoder.activation, parse_activation);
    });
    r.section("generation", [&](Reader& s) {
        auto& g = c.generation;
        s.get("M", g.M);
        s.get("K", g.K);
        s.get("temperature", g.temperature);
        s.get("hallucination_fraction", g.hallucination_fraction);
        s.get("prompts", g.prompts);
        s.get_enum("source", g.source, [](const std::string& v) {
            if (v == "stub") return GeneratorSource::Stub;
            if (v == "external") return GeneratorSource::External;
            throw ConfigError("unknown generator source '" + v + "' (expected stub or external)");
        });
        s.get_enum("anchor", g.anchor, [](const std::string& v) {
            if (v == "label") return RelevanceAnchor::BareLabel;
            if (v == "template") return RelevanceAnchor::TemplatedLabel;
            throw ConfigError("unknown relevance anchor '" + v + "' (expected label or template)");
        });
        s.get("anchor_template", g.anchor_template);
        s.get("endpoint", g.endpoint);
        s.get("model", g.model);
        s.get("timeout_seconds", g.timeout_seconds);
        s.get("max_retries", g.max_retries);
    });
    r.section("pretrain", [&](Reader& s) {
        s.get("epochs", c.pretrain.epochs);
        s.get("batch_size", c.pretrain.batch_size);
        s.get("lr", c.pretrain.lr);
        s.get("momentum", c.pretrain.momentum);
        s.get("weight_decay", c.pretrain.weight_decay);
    });
    r.section("train", [&](Reader& s) {
        auto& t = c.train.cfg;
        s.get_enum("mode", t.mode, parse_train_mode);
        s.get("epochs", t.epochs);
        s.get("batch_size", t.batch_size);
        s.get("lr", t.lr);
        s.get("momentum", t.momentum);
        s.get("weight_decay", t.weight_decay);
        s.get("filter", c.train.filter);
        s.get("log_time", c.train.log_time);
        s.section("attack", [&](Reader& a) { read_attack(a, t.attack); });
    });
    r.section("attack", [&](Reader& s) {
        read_attack(s, c.attack.attack);
        s.get_enum("metric", c.attack.metric, parse_metric);
        s.get_enum("classes", c.attack.classes, parse_class_scope);
    });
    r.section("eval", [&](Reader& s) {
        s.get_enum("metric", c.eval.metric, parse_metric);
        if (s.find("classes")) {
            std::vector<std::string> names;
            s.get("classes", names);
            c.eval.classes.clear();
            for (const auto& n : names) c.eval.classes.push_back(parse_class_scope(n));
        }
        s.get("robust", c.eval.robust);
        s.get("retrieval_k", c.eval.retrieval_k);
        s.section("attack", [&](Reader& a) { read_attack(a, c.eval.attack); });
    });
    r.section("diagonal", [&](Reader& s) {
        if (s.find("metrics")) {
            std::vector<std::string> names;
            s.get("metrics", names);
            c.diagonal.metrics.clear();
            for (const auto& n : names) c.diagonal.metrics.push_back(parse_metric(n));
        }
        s.get_enum("classes", c.diagonal.classes, parse_class_scope);
        s.section("attack", [&](Reader& a) { read_attack(a, c.diagonal.attack); });
    });
    r.finish();
}

}  // namespace

void RunConfig::finalize() {
    data.spec.seed = seed;
    generation.seed = seed;
    train.cfg.seed = seed;
    train.cfg.threads = threads;
    train.cfg.attack.seed = seed;
    attack.attack.seed = seed;
    eval.attack.seed = seed;
    diagonal.attack.seed = seed;
}

void RunConfig::validate() const {
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (out.empty()) throw ConfigError("out must name a directory");
    if (data.external_train.empty() != data.external_test.empty()) {
        throw ConfigError("data: external_train and external_test must be given together");
    }
    if (data.external_train.empty()) data.spec.validate();
    if (text.embed_dim < 1) throw ConfigError("text: embed_dim must be >= 1");
    if (text.ngram_size < 1) throw ConfigError("text: ngram_size must be >= 1");
    if (text.template_pattern.find("{label}") == std::string::npos) {
        throw ConfigError("text: template must contain {label}");
    }
    for (const auto h : encoder.hidden) {
        if (h < 1) throw ConfigError("encoder: hidden widths must be >= 1");
    }
    generation.validate();
    if (pretrain.epochs < 0) throw ConfigError("pretrain: epochs must be >= 0");
    if (pretrain.batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
    if (!(pretrain.lr > 0)) throw ConfigError("pretrain: lr must be > 0");
    if (!(pretrain.momentum >= 0 && pretrain.momentum < 1)) throw ConfigError("pretrain: momentum must be in [0, 1)");
    if (!(pretrain.weight_decay >= 0)) throw ConfigError("pretrain: weight_decay must be >= 0");
    train.cfg.validate();
    attack.attack.validate();
    eval.attack.validate();
    if (eval.classes.empty()) throw ConfigError("eval: classes must list at least one scope");
    for (const auto k : eval.retrieval_k) {
        if (k < 1) throw ConfigError("eval: retrieval_k entries must be >= 1");
    }
    diagonal.attack.validate();
    if (diagonal.metrics.size() < 2 || diagonal.metrics.front() != MetricKind::Template) {
        throw ConfigError("diagonal: metrics must start with template and list at least two");
    }
}

RunConfig parse_config(std::string_view toml_text, std::string_view source) {
    toml::table root;
    try {
        root = toml::parse(toml_text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw ConfigError(msg.str());
    }
    RunConfig c;
    read_config(root, c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

}  // namespace saft
