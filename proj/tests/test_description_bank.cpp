#include "saft/description_bank.hpp"
#include "saft/synth_data.hpp"
#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

using namespace saft;

namespace {

bool is_off_topic(const std::string& text) {
    const auto& table = off_topic_descriptions();
    return std::find(table.begin(), table.end(), text) != table.end();
}

bool mentions_any(const std::string& text, const std::vector<std::string>& words) {
    return std::any_of(words.begin(), words.end(), [&](const auto& w) { return text.find(w) != std::string::npos; });
}

/// Chat-completions stand-in on a loopback port. `fail_first` requests get a
/// 500 before the server starts answering.
class FakeEndpoint {
public:
    explicit FakeEndpoint(int fail_first) : fail_first_(fail_first) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int n = ++requests_;
            last_body_ = req.body;
            if (n <= fail_first_) {
                res.status = 500;
                return;
            }
            const nlohmann::json reply{
                {"choices",
                 {{{"message",
                    {{"role", "assistant"},
                     {"content", "1. a red square with sharp corners\n2. a crimson box\n\n- a bright red tile"}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    int requests() const { return requests_.load(); }
    std::string last_body() const { return last_body_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    int fail_first_;
    std::atomic<int> requests_{0};
    std::string last_body_;
};

GenerationConfig external_config(const std::string& url) {
    GenerationConfig g;
    g.source = GeneratorSource::External;
    g.endpoint = url;
    g.model = "test-model";
    g.M = 3;
    g.K = 2;
    g.timeout_seconds = 5;
    g.max_retries = 2;
    return g;
}

}  // namespace

TEST_SUITE("description bank") {

TEST_CASE("semantic filter examples") {
    const std::vector<std::string> c{"a", "b", "c"};
    auto f = semantic_filter(c, {0.2, 0.9, 0.5}, 2);
    CHECK(f.refined == std::vector<std::size_t>{1, 2});
    CHECK(f.candidates == c);
    f = semantic_filter(c, {0.2, 0.9, 0.5}, 3);
    CHECK(f.refined == std::vector<std::size_t>{1, 2, 0});
    f = semantic_filter(c, {0.5, 0.5, 0.1}, 1);
    CHECK(f.refined == std::vector<std::size_t>{0});
    f = semantic_filter({"only"}, {0.3}, 1);
    CHECK(f.refined == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(semantic_filter(c, {0.2, 0.9, 0.5}, 0), ConfigError);
    CHECK_THROWS_AS(semantic_filter(c, {0.2, 0.9, 0.5}, 4), ConfigError);
    CHECK_THROWS_AS(semantic_filter(c, {0.2, 0.9}, 1), ShapeMismatchError);
}

TEST_CASE("filter keeps exactly the K best on random scores") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        const auto M = 1 + static_cast<int>(rng.below(10));
        const auto K = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(M)));
        std::vector<std::string> c(static_cast<std::size_t>(M), "x");
        std::vector<double> s;
        for (int m = 0; m < M; ++m) s.push_back(std::round(rng.uniform(-1, 1) * 4) / 4);
        const auto f = semantic_filter(c, s, K);
        REQUIRE(f.refined.size() == static_cast<std::size_t>(K));
        const double floor = s[f.refined.back()];
        for (std::size_t m = 0; m < s.size(); ++m) {
            if (!f.is_refined(m)) CHECK(s[m] <= floor);
        }
        CHECK(std::is_sorted(f.refined.begin(), f.refined.end(),
                             [&](std::size_t a, std::size_t b) { return s[a] > s[b]; }));
    }
}

TEST_CASE("relevance score examples") {
    const TextEmbedder emb;
    const auto same = relevance_scores(emb, "red square", {"red square"});
    CHECK(same[0] == doctest::Approx(1.0).epsilon(1e-15));
    const auto dog = relevance_scores(emb, "dog", {"a domesticated canine dog", "a winged mythical creature"});
    CHECK(dog[0] == doctest::Approx(0.20739033894608508).epsilon(1e-12));
    CHECK(dog[1] == 0.0);
    CHECK_THROWS_AS(relevance_scores(emb, "dog", {}), ConfigError);
}

TEST_CASE("relevance scores follow candidate order") {
    const TextEmbedder emb;
    const std::vector<std::string> c{"a blue circle", "a red square", "a toy train set"};
    const std::vector<std::string> r{c[2], c[0], c[1]};
    const auto a = relevance_scores(emb, "red square", c);
    const auto b = relevance_scores(emb, "red square", r);
    CHECK(b[0] == a[2]);
    CHECK(b[1] == a[0]);
    CHECK(b[2] == a[1]);
}

TEST_CASE("stub output is frozen for a pinned seed") {
    GenerationConfig g;
    g.M = 5;
    g.K = 3;
    g.seed = 3;
    g.hallucination_fraction = 0.4;
    const std::vector<std::string> expected{
        "a snowy mountain peak",
        "the red square with four equal sides, like a ripe cherry",
        "a square coloured cherry with four right angles",
        "a toy train set",
        "a simple red square, the colour of fire",
    };
    CHECK(generate_descriptions(g, "red square") == expected);
}

TEST_CASE("stub honours M and the hallucination fraction") {
    GenerationConfig g;
    g.K = 1;
    for (int M : {1, 3, 5, 8}) {
        g.M = M;
        CHECK(generate_descriptions(g, "green cross").size() == static_cast<std::size_t>(M));
    }
    g.M = 5;
    g.hallucination_fraction = 0.4;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        g.seed = seed;
        const auto d = generate_descriptions(g, "blue triangle");
        CHECK(std::count_if(d.begin(), d.end(), is_off_topic) == 2);
    }
}

TEST_CASE("on-topic stub descriptions use the class vocabulary") {
    for (const auto& cls : DatasetSpec::all_classes()) {
        GenerationConfig g;
        g.M = 8;
        g.K = 5;
        g.temperature = 0.5;
        g.seed = 4;
        const auto vocab = class_vocabulary(cls);
        for (const auto& d : generate_descriptions(g, cls)) CHECK(mentions_any(d, vocab));
    }
    for (const auto& d : off_topic_descriptions()) {
        for (const auto& cls : DatasetSpec::all_classes()) CHECK_FALSE(mentions_any(d, class_vocabulary(cls)));
    }
}

TEST_CASE("stub is deterministic and seed dependent") {
    GenerationConfig g;
    g.hallucination_fraction = 0.25;
    g.seed = 5;
    const auto a = generate_descriptions(g, "yellow circle");
    CHECK(a == generate_descriptions(g, "yellow circle"));
    g.seed = 6;
    CHECK(a != generate_descriptions(g, "yellow circle"));
}

TEST_CASE("generation config validation") {
    GenerationConfig g;
    g.K = 9;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g = {};
    g.hallucination_fraction = 1.5;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g = {};
    g.prompts.clear();
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g = {};
    g.source = GeneratorSource::External;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    CHECK_THROWS_AS(generate_descriptions(GenerationConfig{}, "purple square"), ConfigError);
    CHECK(fill_label("a photo of a {label}, a {label}", "cat") == "a photo of a cat, a cat");
}

TEST_CASE("injected hallucinations are rejected") {
    const TextEmbedder emb;
    const auto classes = DatasetSpec::all_classes();
    int injected = 0, excluded = 0;
    for (std::uint64_t i = 0; i < 20; ++i) {
        GenerationConfig g;
        g.M = 8;
        g.K = 5;
        g.hallucination_fraction = 0.375;
        g.seed = i;
        const auto bank = build_bank(emb, g, {classes[i % classes.size()]});
        const auto& c = bank.classes[0];
        for (std::size_t m = 0; m < c.candidates.size(); ++m) {
            if (!is_off_topic(c.candidates[m])) continue;
            ++injected;
            excluded += !c.is_refined(m);
        }
    }
    CHECK(injected == 60);
    CHECK(excluded >= 0.9 * injected);
}

TEST_CASE("built banks satisfy the filtering invariant") {
    const TextEmbedder emb;
    GenerationConfig g;
    g.hallucination_fraction = 0.375;
    g.seed = 7;
    const auto bank = build_bank(emb, g, DatasetSpec::all_classes(), 3);
    CHECK_NOTHROW(bank.validate());
    CHECK(bank.classes.size() == 16);
    for (const auto& c : bank.classes) {
        CHECK(c.refined_embeddings().rows() == 5);
        CHECK(c.all_embeddings().rows() == 8);
        CHECK(c.candidate_embeddings.row(0).transpose() == emb.embed(c.candidates[0]));
    }
    CHECK(bank.at("red square").name == "red square");
    CHECK_THROWS_AS(bank.at("purple square"), DependencyError);
    // Thread count does not change the result.
    const auto serial = build_bank(emb, g, DatasetSpec::all_classes(), 1);
    for (std::size_t i = 0; i < bank.classes.size(); ++i) {
        CHECK(serial.classes[i].candidates == bank.classes[i].candidates);
        CHECK(serial.classes[i].refined == bank.classes[i].refined);
    }
}

TEST_CASE("relevance anchor can be the templated label") {
    const TextEmbedder emb;
    GenerationConfig g;
    g.anchor = RelevanceAnchor::TemplatedLabel;
    const auto bank = build_bank(emb, g, {"red square"});
    const auto& c = bank.classes[0];
    CHECK(c.scores == relevance_scores(emb, "a photo of a red square", c.candidates));
}

TEST_CASE("validate rejects an excluded candidate that outscores a refined one") {
    const TextEmbedder emb(16);
    auto c = semantic_filter({"a red square", "a blue circle"}, {0.9, 0.1}, 1);
    c.name = "red square";
    c.candidate_embeddings = MatrixXd::Zero(2, 16);
    DescriptionBank bank{16, 3, emb.config_hash(), {c}};
    CHECK_NOTHROW(bank.validate());
    bank.classes[0].refined = {1};
    CHECK_THROWS_AS(bank.validate(), FormatError);
}

TEST_CASE("bank round trip") {
    testing::TempDir dir("bank");
    const TextEmbedder emb(64);
    GenerationConfig g;
    g.hallucination_fraction = 0.25;
    const auto bank = build_bank(emb, g, {"red square", "green cross"});
    save_bank(dir / "bank.json", bank, "abc123");
    std::string hash;
    const auto back = load_bank(dir / "bank.json", emb, &hash);
    CHECK(hash == "abc123");
    REQUIRE(back.classes.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back.classes[i].name == bank.classes[i].name);
        CHECK(back.classes[i].candidates == bank.classes[i].candidates);
        CHECK(back.classes[i].scores == bank.classes[i].scores);
        CHECK(back.classes[i].refined == bank.classes[i].refined);
        CHECK(back.classes[i].candidate_embeddings == bank.classes[i].candidate_embeddings);
    }
    CHECK_THROWS_AS(load_bank(dir / "bank.json", TextEmbedder(32)), FormatError);
    CHECK_THROWS_AS(load_bank(dir / "missing.json", emb), FormatError);
}

TEST_CASE("hand-written bank fixture loads") {
    const TextEmbedder emb(16);
    const auto bank = load_bank(testing::fixture("minimal_bank.json"), emb);
    REQUIRE(bank.classes.size() == 2);
    const auto& red = bank.at("red square");
    CHECK(red.K == 2);
    CHECK(red.refined == std::vector<std::size_t>{2, 1});
    CHECK(bank.at("blue circle").refined == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(load_bank(testing::fixture("minimal_bank.json"), TextEmbedder()), FormatError);
}

TEST_CASE("bank files with inconsistent flags are rejected") {
    testing::TempDir dir("badbank");
    auto j = nlohmann::json::parse(testing::slurp(testing::fixture("minimal_bank.json")));
    j["classes"][0]["candidates"][0]["refined"] = true;
    std::ofstream(dir / "a.json") << j.dump();
    CHECK_THROWS_AS(load_bank(dir / "a.json", TextEmbedder(16)), FormatError);
    // Flag count matches K but the filter invariant does not hold.
    j["classes"][0]["candidates"][2]["refined"] = false;
    std::ofstream(dir / "b.json") << j.dump();
    CHECK_THROWS_AS(load_bank(dir / "b.json", TextEmbedder(16)), FormatError);
    std::ofstream(dir / "c.json") << "{not json";
    CHECK_THROWS_AS(load_bank(dir / "c.json", TextEmbedder(16)), FormatError);
}

TEST_CASE("template bank holds one description per class") {
    const TextEmbedder emb;
    const auto bank = template_bank(emb, {"red square", "blue circle"}, "a photo of a {label}");
    CHECK(bank.classes[1].candidates == std::vector<std::string>{"a photo of a blue circle"});
    CHECK(bank.classes[1].refined_embeddings().row(0).transpose() == emb.embed("a photo of a blue circle"));
}

TEST_CASE("external source parses list replies") {
    FakeEndpoint server(0);
    const auto d = generate_descriptions(external_config(server.url()), "red square");
    CHECK(d == std::vector<std::string>{"a red square with sharp corners", "a crimson box", "a bright red tile"});
    CHECK(server.requests() == 1);
    const auto body = nlohmann::json::parse(server.last_body());
    CHECK(body["model"] == "test-model");
    CHECK(body["messages"][1]["content"].get<std::string>().find("red square") != std::string::npos);
}

TEST_CASE("external source retries then succeeds") {
    FakeEndpoint server(2);
    const auto d = generate_descriptions(external_config(server.url()), "red square");
    CHECK(d.size() == 3);
    CHECK(server.requests() == 3);
}

TEST_CASE("external source gives up after the retry budget") {
    FakeEndpoint server(100);
    try {
        generate_descriptions(external_config(server.url()), "red square");
        FAIL("expected an endpoint error");
    } catch (const EndpointError& e) {
        CHECK(e.attempts() == 3);
        CHECK(server.requests() == 3);
        CHECK(std::string(e.what()).find("HTTP status 500") != std::string::npos);
    }
}

}
