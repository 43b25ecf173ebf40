#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "domainbench/errors.hpp"
#include "domainbench/http.hpp"
#include "domainbench/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitStale = 3;
constexpr int kExitUpstream = 4;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> domain;
  std::optional<std::string> method;
  std::optional<std::string> scorer;
  std::optional<std::string> embedder;
};

domainbench::pipeline::Config apply(const Overrides& o) {
  auto cfg = domainbench::pipeline::Config::load(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.domain) cfg.domain = *o.domain;
  if (o.method) cfg.methods = {*o.method};
  if (o.scorer) {
    domainbench::pipeline::ModelSpec remote;
    remote.id = "remote";
    remote.kind = "http";
    remote.url = *o.scorer;
    std::erase_if(cfg.models, [](const auto& m) { return m.id == "remote"; });
    cfg.models.push_back(remote);
  }
  if (o.embedder) {
    cfg.embedder = "http";
    cfg.embedder_url = *o.embedder;
  }
  cfg.validate();
  return cfg;
}

int run(const std::string& stage, const Overrides& o) {
  using namespace domainbench;
  try {
    const auto cfg = apply(o);
    pipeline::run_stage(cfg, stage);
    const auto manifest = pipeline::load_manifest(cfg.work_dir);
    std::cout << stage << ": ok (run_id " << manifest.value("run_id", std::string()) << ")\n";
    for (const auto& [name, entry] : manifest.at("stages").items()) {
      if (stage != "run" && name != stage) continue;
      for (const auto& w : entry.at("warnings")) std::cerr << "warning [" << name << "]: " << w.get<std::string>() << "\n";
    }
    return kExitOk;
  } catch (const ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TokenizerMismatch& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StaleArtifact& e) {
    std::cerr << "stale artifact: " << e.what() << "\n";
    return kExitStale;
  } catch (const EmbeddingUnavailable& e) {
    std::cerr << "upstream error: " << e.what() << "\n";
    return kExitUpstream;
  } catch (const ScorerUnavailable& e) {
    std::cerr << "upstream error: " << e.what() << "\n";
    return kExitUpstream;
  } catch (const http::ServiceError& e) {
    std::cerr << "upstream error: " << e.what() << "\n";
    return kExitUpstream;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-knowledge benchmark builder and evaluator"};
  app.require_subcommand(1);
  Overrides o;
  std::string chosen;
  std::vector<std::string> stages = domainbench::pipeline::kStages;
  stages.push_back("run");
  for (const auto& name : stages) {
    auto* sub = app.add_subcommand(name, name == "run" ? "Run every stage in order" : "Run the " + name + " stage");
    sub->add_option("--config", o.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the seed");
    sub->add_option("--domain", o.domain, "Restrict the corpus to one category");
    sub->add_option("--method", o.method, "Word-list weighting")->check(CLI::IsMember({"tf", "tfidf"}));
    sub->add_option("--scorer", o.scorer, "Add a remote scorer model by URL");
    sub->add_option("--embedder", o.embedder, "Use a remote embedding service");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  return run(chosen, o);
}
