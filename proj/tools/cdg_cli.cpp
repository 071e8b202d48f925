#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/spdlog.h>

#include "cdg/collector.hpp"
#include "cdg/config.hpp"
#include "cdg/errors.hpp"
#include "cdg/eval.hpp"
#include "cdg/grader.hpp"
#include "cdg/loop.hpp"
#include "cdg/serialization.hpp"
#include "cdg/store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kTransport = 3, kContract = 4 };

json read_json_file(const fs::path& path) {
  try {
    return json::parse(cdg::read_text(path));
  } catch (const json::exception& e) {
    throw cdg::ConfigError("cannot parse " + path.string() + ": " + e.what());
  } catch (const cdg::Error& e) {
    throw cdg::ConfigError(e.what());
  }
}

std::shared_ptr<cdg::Backend> backend_from_file(const fs::path& path, std::shared_ptr<const cdg::AnswerKey> answers) {
  cdg::BackendSpec spec;
  try {
    read_json_file(path).get_to(spec);
  } catch (const json::exception& e) {
    throw cdg::ConfigError("invalid backend spec " + path.string() + ": " + e.what());
  }
  return cdg::make_backend(spec, std::move(answers));
}

std::vector<cdg::Question> filter_split(std::vector<cdg::Question> qs, const std::string& split) {
  if (split == "all") return qs;
  if (split != "train" && split != "test") throw cdg::ConfigError("--split must be train, test or all");
  auto want = split == "train" ? cdg::Split::train : cdg::Split::test;
  std::erase_if(qs, [&](const cdg::Question& q) { return q.split != want; });
  return qs;
}

void write_report(const cdg::EvalReport& report, const fs::path& out) {
  cdg::write_text_atomic(out, json(report).dump(2) + "\n");
  fs::path items = out;
  items.replace_extension(".items.jsonl");
  cdg::write_jsonl(items, report.per_item);
  std::cout << json(report.metrics).dump(2) << "\n";
}

struct Common {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
  int round = 1;
};

cdg::RunConfig load_config(const Common& c) {
  json overrides = json::object();
  if (!c.out.empty()) overrides["output_dir"] = fs::absolute(c.out).string();
  if (c.seed >= 0) overrides["run_seed"] = c.seed;
  return cdg::load_run_config(c.config, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Critic-discernment game orchestration: self-play collection, ReST selection and evaluation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // grade
  auto* grade = app.add_subcommand("grade", "Grade a solution or answer against a ground truth");
  std::string g_solution, g_file, g_truth;
  grade->add_option("--solution", g_solution, "Solution text or bare answer");
  grade->add_option("--solution-file", g_file, "File holding the solution text")->check(CLI::ExistingFile);
  grade->add_option("--truth", g_truth, "Ground-truth answer")->required();

  // collect / select / export / loop
  Common stage;
  auto add_stage_opts = [&](CLI::App* sub, bool with_round) {
    sub->add_option("--config", stage.config, "Run config JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", stage.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", stage.seed, "Run seed (overrides run_seed)");
    if (with_round) sub->add_option("--round", stage.round, "Round index t")->check(CLI::PositiveNumber);
  };
  auto* collect = app.add_subcommand("collect", "Collect self-play episodes for one round");
  add_stage_opts(collect, true);
  auto* select = app.add_subcommand("select", "Select training samples and union with the previous round");
  add_stage_opts(select, true);
  auto* exporter = app.add_subcommand("export", "Write balanced SFT and DPO files and seal the round manifest");
  add_stage_opts(exporter, true);
  auto* loop = app.add_subcommand("loop", "Run rounds 1..T of collect, select and export");
  add_stage_opts(loop, false);
  int rounds = 1;
  loop->add_option("--rounds,-T", rounds, "Number of rounds")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a backend on math, error detection or self-correction");
  std::string e_task = "math", e_corpus, e_backend, e_annotator, e_items, e_out = "report.json", e_split = "test";
  int e_k = 1, e_samples = 8, e_cap = 4;
  std::uint64_t e_seed = 0;
  eval->add_option("--task", e_task, "math | errdet | selfcorrect")
      ->check(CLI::IsMember({"math", "errdet", "selfcorrect"}));
  eval->add_option("--corpus", e_corpus, "Question corpus JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--backend", e_backend, "Backend spec JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--annotator", e_annotator, "Annotator backend spec (errdet without --items)");
  eval->add_option("--items", e_items, "Pre-built error-detection items JSONL");
  eval->add_option("--k", e_k, "Samples for majority voting; 1 = Pass@1")->check(CLI::PositiveNumber);
  eval->add_option("--n-samples", e_samples, "Samples per question when building error-detection items");
  eval->add_option("--split", e_split, "train | test | all");
  eval->add_option("--seed", e_seed, "Run seed");
  eval->add_option("--concurrency", e_cap, "Questions in flight");
  eval->add_option("--out", e_out, "Report path; per-item records go to <out>.items.jsonl");

  // winrate
  auto* winrate = app.add_subcommand("winrate", "Cross-evaluate provers against helpful and misleading critics");
  std::vector<std::string> w_provers, w_helpful, w_misleading;
  std::string w_corpus, w_out = "winrate.json", w_split = "test";
  int w_revisions = 4;
  std::uint64_t w_seed = 0;
  winrate->add_option("--corpus", w_corpus, "Question corpus JSONL")->required()->check(CLI::ExistingFile);
  winrate->add_option("--prover", w_provers, "Prover backend spec (repeatable)")->required();
  winrate->add_option("--helpful", w_helpful, "Helpful critic spec (repeatable)")->required();
  winrate->add_option("--misleading", w_misleading, "Misleading critic spec (repeatable)")->required();
  winrate->add_option("--n-revisions", w_revisions, "Revisions per critique")->check(CLI::PositiveNumber);
  winrate->add_option("--split", w_split, "train | test | all");
  winrate->add_option("--seed", w_seed, "Run seed");
  winrate->add_option("--out", w_out, "Report path");

  // imitate
  auto* imitate = app.add_subcommand("imitate", "Build an imitation dataset from a teacher playing all roles");
  std::string i_teacher, i_out = "imitation.jsonl";
  std::size_t i_target = 0;
  add_stage_opts(imitate, false);
  imitate->add_option("--teacher", i_teacher, "Teacher backend spec")->required()->check(CLI::ExistingFile);
  imitate->add_option("--target-size", i_target, "Number of samples")->required();
  imitate->add_option("--dataset", i_out, "Output JSONL");

  // distill
  auto* distill = app.add_subcommand("distill", "Rejection-sampling or self-correction datasets");
  std::string d_mode = "rejection", d_corpus, d_backend, d_out = "distill.jsonl", d_split = "train";
  int d_n = 4;
  std::size_t d_cap = 5000;
  std::uint64_t d_seed = 0;
  distill->add_option("--mode", d_mode, "rejection | selfcorrect")->check(CLI::IsMember({"rejection", "selfcorrect"}));
  distill->add_option("--corpus", d_corpus, "Question corpus JSONL")->required()->check(CLI::ExistingFile);
  distill->add_option("--backend", d_backend, "Generator backend spec")->required()->check(CLI::ExistingFile);
  distill->add_option("--n", d_n, "Samples per question")->check(CLI::PositiveNumber);
  distill->add_option("--cap", d_cap, "Per-type cap (selfcorrect)");
  distill->add_option("--split", d_split, "train | test | all");
  distill->add_option("--seed", d_seed, "Run seed");
  distill->add_option("--out", d_out, "Output JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (grade->parsed()) {
      std::string text = g_solution;
      if (!g_file.empty()) text = cdg::read_text(g_file);
      if (text.empty()) throw cdg::ConfigError("grade needs --solution or --solution-file");
      auto ex = cdg::extract_final_answer(text);
      // A bare answer has no box; grade it as the answer itself.
      std::string answer = ex ? ex->raw : text;
      auto canon = cdg::canonicalize(answer);
      bool correct = cdg::answers_equivalent(canon, cdg::canonicalize(g_truth));
      json out = {{"extracted", answer},
                  {"normalized", canon.normalized},
                  {"kind", cdg::to_string(canon.kind)},
                  {"resist_marker", cdg::detect_resist_marker(text)},
                  {"correct", correct}};
      std::cout << out.dump(2) << "\n";
      return kOk;
    }
    if (collect->parsed() || select->parsed() || exporter->parsed()) {
      auto cfg = load_config(stage);
      auto questions = cdg::load_corpus(cfg.corpus);
      if (collect->parsed()) {
        auto r = cdg::run_collect_stage(cfg, questions, stage.round);
        std::cout << json{{"episodes", r.episodes.size()}, {"resumed", r.resumed}, {"failed", r.failed_ids}}.dump(2)
                  << "\n";
      } else if (select->parsed()) {
        auto b = cdg::run_select_stage(cfg, questions, stage.round);
        std::cout << json(b.category_counts()).dump(2) << "\n";
      } else {
        auto m = cdg::run_export_stage(cfg, questions, stage.round);
        std::cout << json(m.artifacts).dump(2) << "\n";
      }
      return kOk;
    }
    if (loop->parsed()) {
      auto cfg = load_config(stage);
      auto result = cdg::run_loop(cfg, rounds);
      json out = {{"rounds_sealed", result.manifests.size()}, {"halted", result.halted}, {"reason", result.reason}};
      std::cout << out.dump(2) << "\n";
      return kOk;
    }
    if (eval->parsed()) {
      auto questions = filter_split(cdg::load_corpus(e_corpus), e_split);
      auto answers = cdg::answer_key(questions);
      auto backend = backend_from_file(e_backend, answers);
      cdg::EvalOptions opts;
      opts.run_seed = e_seed;
      opts.concurrency_cap = e_cap;
      cdg::EvalReport report;
      if (e_task == "math") {
        report = e_k == 1 ? cdg::eval_pass1(*backend, questions, opts)
                          : cdg::eval_majority(*backend, questions, e_k, opts);
      } else if (e_task == "selfcorrect") {
        report = cdg::eval_self_correction(*backend, questions, opts);
      } else {
        std::vector<cdg::ErrorDetectionItem> items;
        if (!e_items.empty()) {
          items = cdg::read_jsonl<cdg::ErrorDetectionItem>(e_items);
        } else {
          if (e_annotator.empty()) throw cdg::ConfigError("errdet needs --items or --annotator");
          auto annotator = backend_from_file(e_annotator, answers);
          cdg::ErrorDetectionBuildOptions build_opts;
          build_opts.n_samples = e_samples;
          build_opts.run_seed = e_seed;
          items = cdg::build_error_detection_set(*backend, *annotator, questions, build_opts).items;
        }
        report = cdg::eval_error_detection(*backend, questions, std::move(items), opts);
      }
      write_report(report, e_out);
      return kOk;
    }
    if (winrate->parsed()) {
      auto questions = filter_split(cdg::load_corpus(w_corpus), w_split);
      auto answers = cdg::answer_key(questions);
      auto named = [&](const std::vector<std::string>& files) {
        std::vector<cdg::NamedBackend> out;
        for (const auto& f : files) out.push_back({fs::path(f).stem().string(), backend_from_file(f, answers)});
        return out;
      };
      cdg::WinRateOptions opts;
      opts.run_seed = w_seed;
      opts.n_revisions = w_revisions;
      auto report = cdg::eval_winrate_matrix(named(w_provers), named(w_helpful), named(w_misleading), questions, opts);
      write_report(report, w_out);
      std::cout << report.extra.dump(2) << "\n";
      return kOk;
    }
    if (imitate->parsed()) {
      auto cfg = load_config(stage);
      auto questions = filter_split(cdg::load_corpus(cfg.corpus), "train");
      auto teacher = backend_from_file(i_teacher, cdg::answer_key(questions));
      cdg::CollectionPlan plan;
      plan.fanout = cfg.game.fanout;
      plan.sampling = cfg.game.sampling;
      plan.run_seed = cfg.run_seed;
      plan.eta = cfg.game.eta;
      plan.dedup_critiques = cfg.dedup_critiques;
      auto samples = cdg::generate_imitation_dataset(teacher, plan, questions, i_target);
      cdg::write_jsonl(i_out, samples);
      std::cout << json{{"samples", samples.size()}}.dump() << "\n";
      return kOk;
    }
    if (distill->parsed()) {
      auto questions = filter_split(cdg::load_corpus(d_corpus), d_split);
      auto backend = backend_from_file(d_backend, cdg::answer_key(questions));
      std::vector<cdg::TrainingSample> samples;
      if (d_mode == "rejection") {
        cdg::DistillOptions opts;
        opts.n_per_question = d_n;
        opts.run_seed = d_seed;
        samples = cdg::rejection_sample_dataset(*backend, questions, opts);
      } else {
        cdg::SelfCorrectionDataOptions opts;
        opts.n_per_question = d_n;
        opts.cap_per_type = d_cap;
        opts.run_seed = d_seed;
        samples = cdg::build_self_correction_dataset(*backend, questions, opts);
      }
      cdg::write_jsonl(d_out, samples);
      std::cout << json{{"samples", samples.size()}}.dump() << "\n";
      return kOk;
    }
  } catch (const cdg::ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const cdg::CorpusLoadError& e) {
    spdlog::error("corpus: {}", e.what());
    return kConfig;
  } catch (const cdg::TransportError& e) {
    spdlog::error("transport: {}", e.what());
    return kTransport;
  } catch (const cdg::ContractError& e) {
    spdlog::error("contract: {}", e.what());
    return kContract;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
  return kOther;
}
