// tdx: batch entry points for every pipeline stage.
//
// Exit codes: 0 success, 2 validation error, 1 runtime error.
// Environment overrides (applied after --config, before flags):
//   TDX_CORPUS, TDX_INDEX, TDX_CACHE, TDX_LISTEN, TDX_AUTH_TOKEN,
//   TDX_CANDIDATE_ORDER, TDX_ROUTE_K, TDX_TOKEN_BUDGET

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdx/analysis.hpp"
#include "tdx/config.hpp"
#include "tdx/corpus.hpp"
#include "tdx/curation.hpp"
#include "tdx/pipeline.hpp"
#include "tdx/retrieval.hpp"
#include "tdx/rlrf.hpp"
#include "tdx/routing.hpp"
#include "tdx/service.hpp"
#include "tdx/synthetic.hpp"

namespace {

using nlohmann::json;

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string corpus;
  std::string index;
  std::string cache;
  std::optional<std::size_t> candidate_order;
  std::optional<std::size_t> route_k;
  std::optional<std::size_t> token_budget;
};

struct TicketSource {
  std::string ticket_id;
  std::string ticket_file;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "ServiceConfig JSON file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Seed for randomized stages");
  app->add_option("--corpus", c.corpus, "Corpus directory");
  app->add_option("--index", c.index, "Index directory");
  app->add_option("--cache", c.cache, "Embedding cache file");
  app->add_option("--candidate-order", c.candidate_order, "Per-ranker candidate pool size K");
  app->add_option("--route-k", c.route_k, "Neighbours used by routing and retrieval");
  app->add_option("--token-budget", c.token_budget, "Demonstration token budget");
}

void add_ticket_source(CLI::App* app, TicketSource& t) {
  auto* id = app->add_option("--ticket-id", t.ticket_id, "Ticket id from the corpus");
  auto* file = app->add_option("--ticket", t.ticket_file, "Ticket JSON file")->check(CLI::ExistingFile);
  id->excludes(file);
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::size_t env_size(const char* name, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto n = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(name);
    return n;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string(name) + " must be a non-negative integer");
  }
}

tdx::ServiceConfig resolve_config(const Common& c) {
  auto config = c.config_path.empty() ? tdx::ServiceConfig::defaults() : tdx::ServiceConfig::load(c.config_path);
  if (auto v = env("TDX_CORPUS")) config.corpus = *v;
  if (auto v = env("TDX_INDEX")) config.index = *v;
  if (auto v = env("TDX_CACHE")) config.cache = *v;
  if (auto v = env("TDX_LISTEN")) config.listen = *v;
  if (auto v = env("TDX_AUTH_TOKEN")) config.auth_token = *v;
  if (auto v = env("TDX_CANDIDATE_ORDER")) config.candidate_order = env_size("TDX_CANDIDATE_ORDER", *v);
  if (auto v = env("TDX_ROUTE_K")) config.route_k = env_size("TDX_ROUTE_K", *v);
  if (auto v = env("TDX_TOKEN_BUDGET")) config.token_budget = env_size("TDX_TOKEN_BUDGET", *v);
  if (!c.corpus.empty()) config.corpus = c.corpus;
  if (!c.index.empty()) config.index = c.index;
  if (!c.cache.empty()) config.cache = c.cache;
  if (c.candidate_order) config.candidate_order = *c.candidate_order;
  if (c.route_k) config.route_k = *c.route_k;
  if (c.token_budget) config.token_budget = *c.token_budget;
  config.validate();
  return config;
}

std::shared_ptr<const tdx::Corpus> load_validated_corpus(const tdx::ServiceConfig& config) {
  if (config.corpus.empty()) throw std::invalid_argument("--corpus is required");
  auto corpus = std::make_shared<tdx::Corpus>(tdx::load_corpus(config.corpus));
  corpus->validate();
  return corpus;
}

/// Loads the saved index when it exists, otherwise builds one in memory.
tdx::RankerEnsemble open_ensemble(const tdx::ServiceConfig& config, std::shared_ptr<const tdx::Corpus> corpus) {
  auto embedders = tdx::make_embedders(config);
  if (!config.index.empty() && std::filesystem::exists(config.index)) {
    return tdx::RankerEnsemble::load(config.index, std::move(corpus), std::move(embedders));
  }
  return tdx::RankerEnsemble::build(std::move(corpus), std::move(embedders));
}

tdx::Ticket resolve_ticket(const TicketSource& src, const tdx::Corpus& corpus) {
  if (!src.ticket_file.empty()) {
    std::ifstream in(src.ticket_file);
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(src.ticket_file + ": " + e.what());
    }
    return tdx::ticket_from_json(j);
  }
  if (src.ticket_id.empty()) throw std::invalid_argument("one of --ticket-id or --ticket is required");
  const auto it = corpus.tickets.find(src.ticket_id);
  if (it == corpus.tickets.end()) throw std::invalid_argument("unknown ticket id: " + src.ticket_id);
  return it->second;
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << j.dump(2) << '\n';
}

void print_table(const json& report) {
  std::cout << std::left << std::setw(44) << "metric" << "value\n";
  for (const auto& [key, value] : report["metrics"].items()) {
    std::cout << std::left << std::setw(44) << key << std::fixed << std::setprecision(4) << value.get<double>() << '\n';
  }
}

std::vector<std::size_t> parse_ks(const std::string& spec) {
  std::vector<std::size_t> ks;
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ',');) {
    std::size_t used = 0;
    std::size_t k = 0;
    try {
      k = std::stoull(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || k == 0) throw std::invalid_argument("--ks must be a comma list of positive integers");
    ks.push_back(k);
  }
  if (ks.empty()) throw std::invalid_argument("--ks is empty");
  return ks;
}

tdx::Service* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ticket troubleshooting pipeline"};
  app.require_subcommand(1);
  Common common;
  TicketSource ticket_src;

  // gen-synthetic
  tdx::SyntheticOptions synth;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus with planted retrieval structure");
  add_common(gen, common);
  gen->add_option("--tickets", synth.tickets)->check(CLI::PositiveNumber);
  gen->add_option("--faults", synth.faults)->check(CLI::PositiveNumber);
  gen->add_option("--signature-tokens", synth.signature_tokens);
  gen->add_option("--noise-tokens", synth.noise_tokens);
  gen->add_option("--out", synth_out)->required();

  // curate
  double threshold = 5.0;
  int idf_top_k = 15;
  std::string curate_out;
  auto* curate = app.add_subcommand("curate", "Drop uninformative fault analyses");
  add_common(curate, common);
  curate->add_option("--threshold", threshold, "Informativeness threshold Th_f");
  curate->add_option("--top-k", idf_top_k)->check(CLI::PositiveNumber);
  curate->add_option("--out", curate_out, "Output corpus directory")->required();

  // pairs
  std::string pairs_out;
  auto* pairs = app.add_subcommand("pairs", "Export the contrastive pair set");
  add_common(pairs, common);
  pairs->add_option("--out", pairs_out)->required();

  // export-instructions
  std::string task_name;
  std::string instr_out;
  auto* instr = app.add_subcommand("export-instructions", "Export an instruction-tuning dataset");
  add_common(instr, common);
  instr->add_option("--task", task_name)->required()->check(CLI::IsMember({"routing", "fault_analysis"}));
  instr->add_option("--out", instr_out)->required();

  // index
  std::string index_out;
  auto* index = app.add_subcommand("index", "Embed the corpus and save the ranker indexes");
  add_common(index, common);
  index->add_option("--out", index_out, "Index directory (defaults to --index)");

  // retrieve
  std::size_t retrieve_k = 0;
  std::string out_path;
  auto* retrieve = app.add_subcommand("retrieve", "Consensus retrieval of similar tickets");
  add_common(retrieve, common);
  add_ticket_source(retrieve, ticket_src);
  retrieve->add_option("--k", retrieve_k, "Number of results (defaults to route_k)");
  retrieve->add_option("--out", out_path);

  // route
  std::string method = "retrieval";
  auto* route = app.add_subcommand("route", "Predict the responsible team");
  add_common(route, common);
  add_ticket_source(route, ticket_src);
  route->add_option("--method", method)->check(CLI::IsMember({"retrieval", "generative"}));
  route->add_option("--out", out_path);

  // analyze
  std::string grid_json;
  auto* analyze = app.add_subcommand("analyze", "Sample and rank fault-analysis candidates");
  add_common(analyze, common);
  add_ticket_source(analyze, ticket_src);
  analyze->add_option("--grid", grid_json, "JSON [[temperature, count], ...]");
  analyze->add_option("--out", out_path);

  // build-preference
  bool include_pathology = false;
  std::string pref_out;
  auto* pref = app.add_subcommand("build-preference", "Build the ranker-feedback preference dataset");
  add_common(pref, common);
  pref->add_flag("--include-pathology", include_pathology);
  pref->add_option("--out", pref_out)->required();

  // evaluate
  std::string eval_task;
  std::string ks_spec = "1,10,50,100";
  std::optional<std::size_t> limit;
  bool table = false;
  bool use_judge = false;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate one pipeline stage");
  add_common(evaluate, common);
  evaluate->add_option("--task", eval_task)->required()->check(CLI::IsMember({"retrieval", "routing", "generation"}));
  evaluate->add_option("--ks", ks_spec, "Recall cut-offs");
  evaluate->add_option("--limit", limit, "Maximum number of queries");
  evaluate->add_flag("--table", table, "Print a metric table instead of JSON");
  evaluate->add_flag("--judge", use_judge, "Add LLM-judge scores (generation)");
  evaluate->add_option("--out", out_path);

  // serve
  std::string listen;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_common(serve, common);
  serve->add_option("--listen", listen, "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      if (gen->count("--seed")) synth.seed = common.seed;
      const auto corpus = tdx::generate_synthetic_corpus(synth);
      tdx::save_corpus(corpus, synth_out);
      std::cerr << "wrote " << corpus.tickets.size() << " tickets, " << corpus.fault_analyses.size()
                << " fault analyses to " << synth_out << '\n';
      return 0;
    }

    const auto config = resolve_config(common);

    if (*curate) {
      const auto corpus = load_validated_corpus(config);
      const double th = curate->count("--threshold") ? threshold : config.informativeness_threshold;
      const int top_k = curate->count("--top-k") ? idf_top_k : config.idf_top_k;
      tdx::FilterReport report;
      const auto kept = tdx::filter_reports(*corpus, th, top_k, &report);
      tdx::save_corpus(kept, curate_out);
      std::cout << json{{"kept", report.kept}, {"dropped", report.dropped}, {"tickets_kept", report.tickets_kept}}.dump()
                << '\n';
      return 0;
    }
    if (*pairs) {
      const auto corpus = load_validated_corpus(config);
      const auto set = tdx::build_pair_set(*corpus);
      tdx::export_pair_set(set, pairs_out);
      std::cout << json{{"implicit", set.implicit_pairs.size()}, {"explicit", set.explicit_pairs.size()}}.dump() << '\n';
      return 0;
    }
    if (*instr) {
      const auto corpus = load_validated_corpus(config);
      const auto task = task_name == "routing" ? tdx::InstructionTask::routing : tdx::InstructionTask::fault_analysis;
      const auto n = tdx::export_instruction_dataset(*corpus, task, instr_out);
      std::cout << json{{"records", n}}.dump() << '\n';
      return 0;
    }
    if (*index) {
      const auto corpus = load_validated_corpus(config);
      const std::filesystem::path dir = index_out.empty() ? config.index : std::filesystem::path(index_out);
      if (dir.empty()) throw std::invalid_argument("--out or --index is required");
      const auto ensemble = tdx::RankerEnsemble::build(corpus, tdx::make_embedders(config));
      ensemble.save(dir);
      std::cout << json{{"rankers", ensemble.size()}, {"tickets", ensemble.ticket_ids().size()}}.dump() << '\n';
      return 0;
    }
    if (*serve) {
      auto service_config = config;
      if (!listen.empty()) service_config.listen = listen;
      const auto colon = service_config.listen.rfind(':');
      if (colon == std::string::npos) throw std::invalid_argument("listen address must be host:port");
      const auto host = service_config.listen.substr(0, colon);
      const int port = std::stoi(service_config.listen.substr(colon + 1));
      tdx::Service service(service_config);
      const int bound = service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ':' << bound << '\n';
      service.run();
      g_service = nullptr;
      return 0;
    }

    const auto corpus = load_validated_corpus(config);
    const auto ensemble = open_ensemble(config, corpus);

    if (*retrieve) {
      const auto ticket = resolve_ticket(ticket_src, *corpus);
      tdx::ConsensusOptions options;
      options.final_k = retrieve->count("--k") ? retrieve_k : config.route_k;
      if (options.final_k == 0) throw std::invalid_argument("--k must be positive");
      options.candidate_order = config.candidate_order;
      if (!ticket_src.ticket_id.empty()) options.exclude_id = ticket.id;
      const auto result = tdx::consensus_retrieve(ensemble, ticket, options);
      json items = json::array();
      for (const auto& item : result.items) {
        const auto fa = corpus->fault_of(item.item_id);
        items.push_back({{"ticket_id", item.item_id},
                         {"score", item.score},
                         {"fault_analysis_id", fa ? json(*fa) : json(nullptr)}});
      }
      emit({{"items", items}, {"pool_size", result.pool_size}, {"empty_intersection", result.empty_intersection}},
           out_path);
      return 0;
    }
    if (*route) {
      const auto ticket = resolve_ticket(ticket_src, *corpus);
      const auto exclude = ticket_src.ticket_id.empty() ? std::optional<std::string>{} : ticket.id;
      if (method == "retrieval") {
        emit(tdx::to_json(tdx::route_by_retrieval(ensemble, ticket, config.route_k, config.candidate_order, exclude)),
             out_path);
      } else {
        const auto generator = tdx::make_generator(config, corpus->label_set.catch_all());
        emit(tdx::to_json(tdx::route_by_generation(*generator, ensemble, ticket, corpus->label_set, common.seed,
                                                   config.route_k)),
             out_path);
      }
      return 0;
    }
    if (*analyze) {
      const auto ticket = resolve_ticket(ticket_src, *corpus);
      const auto grid = grid_json.empty() ? config.temperature_grid : tdx::grid_from_json(json::parse(grid_json), "--grid");
      const auto generator = tdx::make_generator(config, corpus->label_set.catch_all());
      auto batch = tdx::generate_candidates(*generator, ticket, grid, common.seed);
      const auto ranked = tdx::rank_candidates(ensemble, ticket, std::move(batch.candidates));
      json candidates = json::array();
      for (const auto& c : ranked) candidates.push_back(tdx::to_json(c));
      json failures = json::array();
      for (const auto& f : batch.failures) failures.push_back({{"sample_index", f.sample_index}, {"error", f.error}});
      emit({{"candidates", candidates}, {"failures", failures}}, out_path);
      return 0;
    }
    if (*pref) {
      const auto generator = tdx::make_generator(config, corpus->label_set.catch_all());
      tdx::PreferenceOptions options;
      options.z_grid = config.z_grid;
      options.tau = config.tau;
      options.p_groundtruth = config.p_groundtruth;
      options.pathology_threshold = config.pathology_threshold;
      options.include_pathology = include_pathology;
      options.seed = common.seed;
      tdx::PreferenceDiagnostics diagnostics;
      const auto triples = tdx::build_preference_dataset(*corpus, *generator, ensemble, options, &diagnostics);
      tdx::export_preferences(triples, pref_out);
      std::cout << json{{"triples", triples.size()},
                        {"skipped_tickets", diagnostics.skipped_tickets.size()},
                        {"generation_failures", diagnostics.generation_failures}}
                       .dump()
                << '\n';
      return 0;
    }
    if (*evaluate) {
      json report;
      if (eval_task == "retrieval") {
        report = tdx::evaluate_retrieval(ensemble, parse_ks(ks_spec), config.candidate_order).to_json();
      } else if (eval_task == "routing") {
        report = tdx::evaluate_routing(ensemble, config.route_k, config.candidate_order, limit).to_json();
      } else {
        const auto generator = tdx::make_generator(config, corpus->label_set.catch_all());
        tdx::GenerationEvalOptions options;
        options.seed = common.seed;
        options.limit = limit;
        options.use_judge = use_judge;
        options.pathology_threshold = config.pathology_threshold;
        report = tdx::evaluate_generation(ensemble, *generator, options).to_json();
      }
      if (table) {
        print_table(report);
        if (!out_path.empty()) emit(report, out_path);
      } else {
        emit(report, out_path);
      }
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
