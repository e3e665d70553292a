#include "saft/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "saft/parallel.hpp"
#include "saft/rng.hpp"

namespace saft {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kPretrainStream = 0x707265747261696eULL;

ordered_json attack_json(const AttackConfig& a) {
    ordered_json j;
    j["epsilon"] = a.epsilon;
    j["steps"] = a.steps;
    j["alpha"] = a.step_size();
    j["init"] = to_string(a.init);
    j["loss"] = to_string(a.loss);
    j["logit_scale"] = a.logit_scale;
    j["restarts"] = a.restarts;
    return j;
}

ordered_json data_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    if (!c.data.external_train.empty()) {
        j["external_train"] = file_hash(c.data.external_train);
        j["external_test"] = file_hash(c.data.external_test);
        j["heldout"] = c.data.spec.heldout;
        return j;
    }
    const auto& d = c.data.spec;
    j["classes"] = d.classes;
    j["heldout"] = d.heldout;
    j["image_size"] = d.image_size;
    j["samples_per_class"] = d.samples_per_class;
    j["position_jitter"] = d.position_jitter;
    j["scale_jitter"] = d.scale_jitter;
    j["noise"] = d.noise;
    j["test_fraction"] = d.test_fraction;
    return j;
}

ordered_json text_json(const RunConfig& c) {
    return {{"embed_dim", c.text.embed_dim}, {"ngram_size", c.text.ngram_size}, {"template", c.text.template_pattern}};
}

bool train_needs_bank(const RunConfig& c) { return c.train.cfg.mode == TrainMode::Saft; }

bool needs_bank(MetricKind metric, const AttackConfig& a) {
    return metric == MetricKind::EnsembleMean || a.loss == AttackLoss::EnsembleDissimilarity;
}

bool diagonal_needs_bank(const RunConfig& c) {
    for (const auto m : c.diagonal.metrics) {
        if (m == MetricKind::EnsembleMean) return true;
    }
    return false;
}

std::string hash_of(const ordered_json& j) { return short_hash(j.dump()); }

// ---- run-directory IO -----------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("io", "cannot write '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ordered_json read_json(const fs::path& path) {
    try {
        return ordered_json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

// Builds an artifact in a scratch location next to `final_path`, then moves
// it into place so a failed command never leaves a partial artifact.
template <typename Fn>
void publish(const fs::path& final_path, Fn build) {
    fs::create_directories(final_path.parent_path());
    const fs::path tmp = final_path.parent_path() / (".tmp-" + final_path.filename().string());
    fs::remove_all(tmp);
    try {
        build(tmp);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
    fs::remove_all(final_path);
    fs::rename(tmp, final_path);
}

void require(const fs::path& path, const std::string& what, const std::string& producer) {
    if (!fs::exists(path)) {
        throw DependencyError(what + " not found at '" + path.string() + "'; run '" + producer +
                              "' with the same config first");
    }
}

void check_hash(const ordered_json& j, const std::string& expected, const fs::path& where) {
    const auto it = j.find("config_hash");
    if (it == j.end() || !it->is_string() || it->get<std::string>() != expected) {
        throw FormatError("'" + where.string() + "' records config hash " + (it == j.end() ? std::string("(none)") : it->dump()) +
                          ", expected \"" + expected + "\"");
    }
}

// ---- loaded inputs --------------------------------------------------------

SplitDataset load_data(const RunConfig& cfg, const ArtifactPaths& p, const ArtifactHashes& h) {
    require(p.data, "dataset", "saft gen-data");
    const auto manifest = read_json(p.data / "manifest.json");
    check_hash(manifest, h.data, p.data / "manifest.json");
    SplitDataset split;
    split.train = load_external((p.data / "train.saftds").string());
    split.test = load_external((p.data / "test.saftds").string());
    split.heldout = manifest.at("heldout_labels").get<std::vector<std::uint32_t>>();
    (void)cfg;
    return split;
}

DescriptionBank load_run_bank(const TextEmbedder& embedder, const ArtifactPaths& p, const ArtifactHashes& h) {
    require(p.bank, "description bank", "saft gen-bank");
    std::string recorded;
    auto bank = load_bank(p.bank.string(), embedder, &recorded);
    if (recorded != h.bank) {
        throw FormatError("'" + p.bank.string() + "' records config hash \"" + recorded + "\", expected \"" + h.bank + "\"");
    }
    return bank;
}

Encoder load_trained(const RunConfig& cfg, const ArtifactPaths& p, const ArtifactHashes& h) {
    require(p.train, "trained encoder", "saft train");
    const auto manifest = read_json(p.train / "manifest.json");
    check_hash(manifest, h.train, p.train / "manifest.json");
    return load_params((p.train / "final.saftenc").string(), cfg.encoder.activation);
}

TextEmbedder make_embedder(const RunConfig& cfg) { return TextEmbedder(cfg.text.embed_dim, cfg.text.ngram_size); }

std::vector<std::string> class_table(const RunConfig& cfg) {
    if (cfg.data.external_train.empty()) return cfg.data.spec.classes;
    return load_external(cfg.data.external_train).class_names;
}

std::vector<std::uint32_t> scope_labels(const SplitDataset& split, ClassScope scope) {
    std::vector<std::uint32_t> out;
    for (const auto l : split.test.present_labels()) {
        const bool held = std::find(split.heldout.begin(), split.heldout.end(), l) != split.heldout.end();
        if (scope == ClassScope::All || (scope == ClassScope::Heldout) == held) out.push_back(l);
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ArtifactHashes artifact_hashes(const RunConfig& c) {
    ArtifactHashes h;
    h.data = hash_of({{"artifact", "data"}, {"data", data_json(c)}});

    const auto& g = c.generation;
    ordered_json gen{{"M", g.M},
                     {"K", g.K},
                     {"temperature", g.temperature},
                     {"hallucination_fraction", g.hallucination_fraction},
                     {"prompts", g.prompts},
                     {"source", g.source == GeneratorSource::Stub ? "stub" : "external"},
                     {"anchor", g.anchor == RelevanceAnchor::BareLabel ? "label" : "template"},
                     {"anchor_template", g.anchor_template}};
    if (g.source == GeneratorSource::External) {
        gen["endpoint"] = g.endpoint;
        gen["model"] = g.model;
    }
    const ordered_json classes = c.data.external_train.empty() ? ordered_json(c.data.spec.classes)
                                                               : ordered_json(file_hash(c.data.external_train));
    h.bank = hash_of({{"artifact", "bank"}, {"seed", c.seed}, {"classes", classes}, {"text", text_json(c)}, {"generation", gen}});

    const auto& t = c.train.cfg;
    ordered_json train{{"mode", to_string(t.mode)},
                       {"epochs", t.epochs},
                       {"batch_size", t.batch_size},
                       {"lr", t.lr},
                       {"momentum", t.momentum},
                       {"weight_decay", t.weight_decay},
                       {"attack", attack_json(t.attack)},
                       {"filter", c.train.filter},
                       {"log_time", c.train.log_time}};
    ordered_json pretrain{{"epochs", c.pretrain.epochs},
                          {"batch_size", c.pretrain.batch_size},
                          {"lr", c.pretrain.lr},
                          {"momentum", c.pretrain.momentum},
                          {"weight_decay", c.pretrain.weight_decay}};
    ordered_json enc{{"hidden", c.encoder.hidden}, {"activation", to_string(c.encoder.activation)}};
    h.train = hash_of({{"artifact", "train"},
                       {"seed", c.seed},
                       {"data", h.data},
                       {"bank", train_needs_bank(c) ? ordered_json(h.bank) : ordered_json()},
                       {"text", text_json(c)},
                       {"encoder", enc},
                       {"pretrain", pretrain},
                       {"train", train}});

    h.attack = hash_of({{"artifact", "attack"},
                        {"train", h.train},
                        {"bank", needs_bank(c.attack.metric, c.attack.attack) ? ordered_json(h.bank) : ordered_json()},
                        {"metric", to_string(c.attack.metric)},
                        {"classes", to_string(c.attack.classes)},
                        {"attack", attack_json(c.attack.attack)}});

    ordered_json scopes = ordered_json::array();
    for (const auto s : c.eval.classes) scopes.push_back(to_string(s));
    h.eval = hash_of({{"artifact", "eval"},
                      {"train", h.train},
                      {"bank", needs_bank(c.eval.metric, c.eval.attack) ? ordered_json(h.bank) : ordered_json()},
                      {"metric", to_string(c.eval.metric)},
                      {"classes", scopes},
                      {"robust", c.eval.robust},
                      {"retrieval_k", c.eval.retrieval_k},
                      {"attack", attack_json(c.eval.attack)}});

    ordered_json metrics = ordered_json::array();
    for (const auto m : c.diagonal.metrics) metrics.push_back(to_string(m));
    h.diagonal = hash_of({{"artifact", "diagonal"},
                          {"train", h.train},
                          {"bank", diagonal_needs_bank(c) ? ordered_json(h.bank) : ordered_json()},
                          {"metrics", metrics},
                          {"classes", to_string(c.diagonal.classes)},
                          {"attack", attack_json(c.diagonal.attack)}});
    return h;
}

ArtifactPaths artifact_paths(const RunConfig& cfg) {
    const auto h = artifact_hashes(cfg);
    const fs::path root(cfg.out);
    return {root / ("data-" + h.data),       root / ("bank-" + h.bank + ".json"), root / ("train-" + h.train),
            root / ("attack-" + h.attack),   root / ("eval-" + h.eval + ".json"), root / ("diagonal-" + h.diagonal)};
}

void cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
    const auto h = artifact_hashes(cfg);
    const auto p = artifact_paths(cfg);
    SplitDataset split;
    if (cfg.data.external_train.empty()) {
        split = generate(cfg.data.spec);
    } else {
        split.train = load_external(cfg.data.external_train);
        split.test = load_external(cfg.data.external_test);
        if (split.train.class_names != split.test.class_names) {
            throw FormatError("external train and test files have different class tables");
        }
        for (const auto& name : cfg.data.spec.heldout) {
            const auto it = std::find(split.train.class_names.begin(), split.train.class_names.end(), name);
            if (it == split.train.class_names.end()) throw ConfigError("data: held-out class '" + name + "' not in the external class table");
            split.heldout.push_back(static_cast<std::uint32_t>(it - split.train.class_names.begin()));
        }
    }

    std::vector<std::string> heldout_names;
    for (const auto l : split.heldout) heldout_names.push_back(split.train.class_names.at(l));
    ordered_json manifest{{"config_hash", h.data},
                          {"classes", split.train.class_names},
                          {"heldout", heldout_names},
                          {"heldout_labels", split.heldout},
                          {"image_size", split.train.height},
                          {"train_samples", split.train.samples.size()},
                          {"test_samples", split.test.samples.size()}};
    publish(p.data, [&](const fs::path& dir) {
        fs::create_directories(dir);
        save_dataset((dir / "train.saftds").string(), split.train);
        save_dataset((dir / "test.saftds").string(), split.test);
        write_text(dir / "manifest.json", dump(manifest));
    });
    out << "wrote " << p.data.string() << " (" << split.train.samples.size() << " train, " << split.test.samples.size()
        << " test samples)\n";
}

void cmd_gen_bank(const RunConfig& cfg, std::ostream& out) {
    const auto h = artifact_hashes(cfg);
    const auto p = artifact_paths(cfg);
    const auto embedder = make_embedder(cfg);
    const auto bank = build_bank(embedder, cfg.generation, class_table(cfg), cfg.threads);
    publish(p.bank, [&](const fs::path& tmp) { save_bank(tmp.string(), bank, h.bank); });
    out << "wrote " << p.bank.string() << " (" << bank.classes.size() << " classes, M=" << cfg.generation.M
        << ", K=" << cfg.generation.K << ")\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    const auto h = artifact_hashes(cfg);
    const auto p = artifact_paths(cfg);
    const auto split = load_data(cfg, p, h);
    const auto& names = split.train.class_names;
    const auto embedder = make_embedder(cfg);

    TrainTargets targets;
    if (cfg.train.cfg.mode == TrainMode::Saft) {
        if (!fs::exists(p.bank)) {
            throw DependencyError("train in saft mode needs the description bank '" + p.bank.string() +
                                  "'; run 'saft gen-bank' with the same config first");
        }
        targets = saft_targets(load_run_bank(embedder, p, h), names, cfg.train.filter);
    } else {
        targets = template_targets(embedder, names, cfg.text.template_pattern);
    }

    Encoder encoder = init_encoder<double>(split.train.pixel_count(), cfg.encoder.hidden, cfg.text.embed_dim,
                                           cfg.encoder.activation, cfg.seed);
    publish(p.train, [&](const fs::path& dir) {
        fs::create_directories(dir);
        if (cfg.pretrain.epochs > 0) {
            TrainConfig pc;
            pc.epochs = cfg.pretrain.epochs;
            pc.batch_size = cfg.pretrain.batch_size;
            pc.lr = cfg.pretrain.lr;
            pc.momentum = cfg.pretrain.momentum;
            pc.weight_decay = cfg.pretrain.weight_decay;
            pc.attack.steps = 0;
            pc.mode = TrainMode::TemplateBaseline;
            pc.seed = derive_seed(cfg.seed, kPretrainStream);
            pc.threads = cfg.threads;
            const auto pre = run_training(split.train, encoder, template_targets(embedder, names, cfg.text.template_pattern), pc,
                                          [&](int epoch, const Encoder&, const EpochLog& e) {
                                              out << "pretrain epoch " << epoch << "  loss " << std::fixed
                                                  << std::setprecision(4) << e.clean_loss << "\n";
                                          });
            encoder = pre.encoder;
            save_params((dir / "pretrained.saftenc").string(), encoder);
            write_text(dir / "pretrain-log.csv", pre.log.to_csv(cfg.train.log_time));
        }
        const auto result = run_training(split.train, encoder, targets, cfg.train.cfg,
                                         [&](int epoch, const Encoder& e, const EpochLog& log) {
                                             char name[32];
                                             std::snprintf(name, sizeof name, "epoch-%03d.saftenc", epoch);
                                             save_params((dir / name).string(), e);
                                             out << "epoch " << epoch << "  adv " << std::fixed << std::setprecision(4)
                                                 << log.adv_loss << "  clean " << log.clean_loss << "  success "
                                                 << log.attack_success << "\n";
                                         });
        save_params((dir / "final.saftenc").string(), result.encoder);
        write_text(dir / "log.csv", result.log.to_csv(cfg.train.log_time));
        const auto& last = result.log.epochs.back();
        write_text(dir / "manifest.json", dump({{"config_hash", h.train},
                                                {"data", h.data},
                                                {"bank", train_needs_bank(cfg) ? ordered_json(h.bank) : ordered_json()},
                                                {"mode", to_string(cfg.train.cfg.mode)},
                                                {"epochs", cfg.train.cfg.epochs},
                                                {"pretrain_epochs", cfg.pretrain.epochs},
                                                {"parameters", result.encoder.parameter_count()},
                                                {"final_adv_loss", last.adv_loss},
                                                {"final_clean_loss", last.clean_loss}}));
    });
    out << "wrote " << p.train.string() << "\n";
}

void cmd_attack(const RunConfig& cfg, std::ostream& out) {
    const auto h = artifact_hashes(cfg);
    const auto p = artifact_paths(cfg);
    const auto split = load_data(cfg, p, h);
    const auto encoder = load_trained(cfg, p, h);
    const auto embedder = make_embedder(cfg);
    const auto& ac = cfg.attack;
    std::optional<DescriptionBank> bank;
    if (needs_bank(ac.metric, ac.attack)) bank = load_run_bank(embedder, p, h);
    const auto res = make_class_resources(ac.metric, embedder, bank ? &*bank : nullptr, split.test.class_names,
                                          scope_labels(split, ac.classes), cfg.text.template_pattern);

    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < split.test.samples.size(); ++i) {
        if (res.index_of(split.test.samples[i].label) >= 0) ids.push_back(i);
    }
    if (ids.empty()) throw ConfigError("attack: no test samples in the selected classes");

    Dataset adv = split.test;
    adv.samples.clear();
    adv.samples.resize(ids.size());
    std::vector<char> clean_ok(ids.size()), adv_ok(ids.size());
    std::vector<double> linf(ids.size()), final_loss(ids.size());
    parallel_for(ids.size(), cfg.threads, [&](std::size_t k) {
        const auto& s = split.test.samples[ids[k]];
        const auto truth = static_cast<std::size_t>(res.index_of(s.label));
        const auto pert = pgd_attack(encoder, s.pixels, eval_target(res, truth, ac.attack), ac.attack, ids[k]);
        const VectorXd x_adv = s.pixels + pert.delta;
        adv.samples[k] = {x_adv, s.label};
        clean_ok[k] = predict_zero_shot(encode_image(encoder, s.pixels), res) == truth;
        adv_ok[k] = predict_zero_shot(encode_image(encoder, x_adv), res) == truth;
        linf[k] = pert.delta.size() ? pert.delta.cwiseAbs().maxCoeff() : 0.0;
        final_loss[k] = pert.loss_trace.back();
    });

    const double n = static_cast<double>(ids.size());
    const double clean_acc = std::count(clean_ok.begin(), clean_ok.end(), 1) / n;
    const double adv_acc = std::count(adv_ok.begin(), adv_ok.end(), 1) / n;
    std::size_t flipped = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) flipped += clean_ok[k] && !adv_ok[k];
    ordered_json summary{{"config_hash", h.attack},
                         {"train", h.train},
                         {"metric", to_string(ac.metric)},
                         {"classes", to_string(ac.classes)},
                         {"attack", attack_json(ac.attack)},
                         {"samples", ids.size()},
                         {"sample_ids", ids},
                         {"clean_acc", clean_acc},
                         {"adversarial_acc", adv_acc},
                         {"flipped", flipped},
                         {"max_linf", *std::max_element(linf.begin(), linf.end())},
                         {"mean_final_loss", std::accumulate(final_loss.begin(), final_loss.end(), 0.0) / n}};
    publish(p.attack, [&](const fs::path& dir) {
        fs::create_directories(dir);
        save_dataset((dir / "adversarial.saftds").string(), adv);
        write_text(dir / "summary.json", dump(summary));
    });
    out << "wrote " << p.attack.string() << "\n"
        << "samples " << ids.size() << "  clean " << std::fixed << std::setprecision(3) << clean_acc << "  adversarial "
        << adv_acc << "  flipped " << flipped << "\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const auto h = artifact_hashes(cfg);
    const auto p = artifact_paths(cfg);
    const auto split = load_data(cfg, p, h);
    const auto encoder = load_trained(cfg, p, h);
    const auto embedder = make_embedder(cfg);
    const auto& ec = cfg.eval;
    std::optional<DescriptionBank> bank;
    if (needs_bank(ec.metric, ec.attack)) bank = load_run_bank(embedder, p, h);
    const std::optional<AttackConfig> attack = ec.robust ? std::optional<AttackConfig>(ec.attack) : std::nullopt;

    ordered_json results = ordered_json::array();
    std::ostringstream table;
    table << std::left << std::setw(9) << "classes" << std::right << std::setw(9) << "samples" << std::setw(9) << "clean"
          << std::setw(9) << "robust" << "\n";
    for (const auto scope : ec.classes) {
        const auto labels = scope_labels(split, scope);
        ordered_json r{{"classes", to_string(scope)}, {"labels", labels}};
        table << std::left << std::setw(9) << to_string(scope) << std::right;
        if (labels.size() < 2) {
            r["evaluated"] = 0;
            r["clean_acc"] = nullptr;
            r["robust_acc"] = nullptr;
            table << std::setw(9) << 0 << std::setw(9) << "-" << std::setw(9) << "-" << "\n";
            results.push_back(r);
            continue;
        }
        const auto res = make_class_resources(ec.metric, embedder, bank ? &*bank : nullptr, split.test.class_names, labels,
                                              cfg.text.template_pattern);
        const auto acc = evaluate(split.test, encoder, res, attack, cfg.threads);
        r["evaluated"] = acc.evaluated;
        r["clean_acc"] = acc.clean_acc;
        r["robust_acc"] = acc.robust_acc ? ordered_json(*acc.robust_acc) : ordered_json();
        table << std::setw(9) << acc.evaluated << std::fixed << std::setprecision(3) << std::setw(9) << acc.clean_acc
              << std::setw(9);
        if (acc.robust_acc) {
            table << *acc.robust_acc;
        } else {
            table << "-";
        }
        table << "\n";
        results.push_back(r);
    }

    // Retrieval pairs: the first test image of each class with its templated caption.
    std::vector<VectorXd> images;
    std::vector<std::string> captions;
    for (const auto l : split.test.present_labels()) {
        for (const auto& s : split.test.samples) {
            if (s.label == l) {
                images.push_back(s.pixels);
                captions.push_back(fill_label(cfg.text.template_pattern, split.test.class_names[l]));
                break;
            }
        }
    }
    ordered_json retrieval = ordered_json::array();
    for (const auto k : ec.retrieval_k) {
        if (static_cast<std::size_t>(k) > images.size()) {
            throw ConfigError("eval: retrieval_k " + std::to_string(k) + " exceeds the " + std::to_string(images.size()) +
                              " image-caption pairs");
        }
        const auto rr = retrieval_recall(images, captions, encoder, embedder, k);
        retrieval.push_back({{"k", k}, {"image_recall", rr.image_recall}, {"text_recall", rr.text_recall}});
        table << "IRR@" << k << " " << std::fixed << std::setprecision(3) << rr.image_recall << "  TRR@" << k << " "
              << rr.text_recall << "\n";
    }

    ordered_json report{{"config_hash", h.eval},
                        {"train", h.train},
                        {"metric", to_string(ec.metric)},
                        {"attack", ec.robust ? attack_json(ec.attack) : ordered_json()},
                        {"results", results},
                        {"retrieval", {{"pairs", images.size()}, {"recall", retrieval}}}};
    publish(p.eval, [&](const fs::path& tmp) { write_text(tmp, dump(report)); });
    out << table.str() << "wrote " << p.eval.string() << "\n";
}

void cmd_diagonal(const RunConfig& cfg, std::ostream& out) {
    const auto h = artifact_hashes(cfg);
    const auto p = artifact_paths(cfg);
    const auto split = load_data(cfg, p, h);
    const auto encoder = load_trained(cfg, p, h);
    const auto embedder = make_embedder(cfg);
    std::optional<DescriptionBank> bank;
    if (diagonal_needs_bank(cfg)) bank = load_run_bank(embedder, p, h);
    const auto labels = scope_labels(split, cfg.diagonal.classes);
    std::vector<ClassResources> metrics;
    for (const auto m : cfg.diagonal.metrics) {
        metrics.push_back(make_class_resources(m, embedder, bank ? &*bank : nullptr, split.test.class_names, labels,
                                               cfg.text.template_pattern));
    }
    const auto result = diagonal_analysis(split.test, encoder, metrics, cfg.diagonal.attack, cfg.threads);

    ordered_json series = ordered_json::array();
    std::ostringstream table;
    table << std::left << std::setw(15) << "metric" << std::right << std::setw(9) << "samples" << std::setw(16)
          << "below_diagonal" << "\n";
    std::string csv = "sample_id,metric,clean_sim,adv_sim\n";
    for (const auto& s : result.series) {
        series.push_back({{"metric", s.metric}, {"samples", s.clean.size()}, {"below_diagonal", s.below_diagonal}});
        table << std::left << std::setw(15) << s.metric << std::right << std::setw(9) << s.clean.size() << std::fixed
              << std::setprecision(3) << std::setw(16) << s.below_diagonal << "\n";
    }
    for (std::size_t k = 0; k < result.sample_ids.size(); ++k) {
        for (const auto& s : result.series) {
            csv += std::to_string(result.sample_ids[k]) + "," + s.metric + "," + fmt(s.clean[k]) + "," + fmt(s.adv[k]) + "\n";
        }
    }
    ordered_json report{{"config_hash", h.diagonal},
                        {"train", h.train},
                        {"classes", to_string(cfg.diagonal.classes)},
                        {"attack", attack_json(cfg.diagonal.attack)},
                        {"series", series}};
    publish(p.diagonal, [&](const fs::path& dir) {
        fs::create_directories(dir);
        write_text(dir / "report.json", dump(report));
        write_text(dir / "pairs.csv", csv);
    });
    out << table.str() << "wrote " << p.diagonal.string() << "\n";
}

void run_command(const std::string& name, const RunConfig& cfg, std::ostream& out) {
    if (name == "gen-data") return cmd_gen_data(cfg, out);
    if (name == "gen-bank") return cmd_gen_bank(cfg, out);
    if (name == "train") return cmd_train(cfg, out);
    if (name == "attack") return cmd_attack(cfg, out);
    if (name == "eval") return cmd_eval(cfg, out);
    if (name == "diagonal") return cmd_diagonal(cfg, out);
    throw ConfigError("unknown command '" + name + "'");
}

}  // namespace saft
