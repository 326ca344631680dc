/* Copyright 2026 The avsec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "avsec/cli.hpp"

#include <CLI11.hpp>
#include <csignal>
#include <pthread.h>

#include <atomic>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <thread>

#include "avsec/annotation.hpp"
#include "avsec/av_analysis.hpp"
#include "avsec/config.hpp"
#include "avsec/csv.hpp"
#include "avsec/dsp.hpp"
#include "avsec/error.hpp"
#include "avsec/evaluation.hpp"
#include "avsec/hashing.hpp"
#include "avsec/http_server.hpp"
#include "avsec/ledger.hpp"
#include "avsec/service.hpp"

namespace avsec::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const UsageError&) {
    return kExitUsage;
  } catch (const DataError&) {
    return kExitData;
  } catch (const NumericError&) {
    return kExitNumeric;
  } catch (const fs::filesystem_error&) {
    return kExitData;
  } catch (...) {
    return kExitFailure;
  }
}

namespace {

constexpr const char* kVersion = "0.1.0";

// Stages outputs under temporary names; removes them unless committed.
class Outputs {
 public:
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& [final_path, temp] : staged_) fs::remove(temp, ec);
  }

  fs::path stage(const fs::path& final_path) {
    if (final_path.has_parent_path()) fs::create_directories(final_path.parent_path());
    fs::path temp = final_path;
    temp += ".partial";
    staged_.emplace_back(final_path, temp);
    return temp;
  }

  void commit() {
    for (const auto& [final_path, temp] : staged_) fs::rename(temp, final_path);
    committed_ = true;
  }

 private:
  std::vector<std::pair<fs::path, fs::path>> staged_;
  bool committed_ = false;
};

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(p, mode);
  if (!f) throw DataError("cannot write " + p.string());
  return f;
}

void close_out(std::ofstream& f, const fs::path& p) {
  f.close();
  if (!f) throw DataError("write failed for " + p.string());
}

// Resolved options plus input hashes, written beside every output.
class Echo {
 public:
  Echo(std::string command, int argc, const char* const* argv) {
    j_["command"] = std::move(command);
    j_["version"] = kVersion;
    j_["argv"] = std::vector<std::string>(argv, argv + argc);
    j_["options"] = json::object();
    j_["inputs"] = json::object();
  }
  json& options() { return j_["options"]; }
  void input(const fs::path& p) { j_["inputs"][p.string()] = sha256_file(p); }
  void input_digest(const std::string& name, const std::string& digest) { j_["inputs"][name] = digest; }
  std::map<std::string, std::string> inputs() const { return j_["inputs"].get<std::map<std::string, std::string>>(); }

  void write_beside(Outputs& outs, const fs::path& output) const {
    fs::path echo_path = output;
    echo_path += ".config.json";
    const fs::path temp = outs.stage(echo_path);
    auto f = open_out(temp);
    json j = j_;
    j["output"] = output.string();
    f << j.dump(2) << '\n';
    close_out(f, temp);
  }

 private:
  json j_;
};

// Flag > environment > config file > default.
class Resolver {
 public:
  explicit Resolver(const Settings& s) : s_(s) {}

  std::string str(const std::optional<std::string>& flag, std::string_view key, std::string def = "") const {
    if (flag) return *flag;
    return s_.get_string(key).value_or(std::move(def));
  }
  long long integer(const std::optional<long long>& flag, std::string_view key, long long def) const {
    if (flag) return *flag;
    return s_.get_int(key).value_or(def);
  }
  double real(const std::optional<double>& flag, std::string_view key, double def) const {
    if (flag) return *flag;
    return s_.get_double(key).value_or(def);
  }
  bool flag(bool set, std::string_view key) const {
    return set || s_.get_bool(key).value_or(false);
  }

 private:
  const Settings& s_;
};

fs::path require_path(const std::string& value, std::string_view what) {
  if (value.empty()) throw UsageError(std::string(what) + " is required");
  return value;
}

fs::path existing(const std::string& value, std::string_view what) {
  fs::path p = require_path(value, what);
  if (!fs::exists(p)) throw DataError(std::string(what) + " not found: " + p.string());
  return p;
}

std::set<int> parse_int_list(const std::string& text, std::string_view what) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.insert(static_cast<int>(csv::parse_int(item, what)));
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

json dsp_json(const DspConfig& c) {
  return {{"target_sample_rate", c.target_sample_rate},
          {"fft_size", c.fft_size},
          {"hop", c.hop},
          {"n_mels", c.n_mels},
          {"mel_scale", c.mel_scale == MelScale::kSlaney ? "slaney" : "htk"},
          {"f_min", c.f_min},
          {"f_max", c.effective_f_max()},
          {"power", c.power},
          {"log_floor", c.log_floor},
          {"db_ref", c.db_ref == DbReference::kUnity ? "unity" : "max"},
          {"top_db", c.top_db ? json(*c.top_db) : json(nullptr)}};
}

// --- shared data options ----------------------------------------------------

struct DataFlags {
  std::optional<std::string> manifest, avs, logmel, embeddings;
  std::optional<long long> embedding_dim;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "Manifest CSV (filename,fold,target,...)");
    app->add_option("--avs", avs, "Graded action vector CSV");
    app->add_option("--logmel", logmel, "Log-mel feature cache from extract-features");
    app->add_option("--embeddings", embeddings, "Precomputed embedding file (AVSEC1 or CSV)");
    app->add_option("--embedding-dim", embedding_dim, "Embedding dimension (default 6144)");
  }
};

struct LoadedData {
  FoldedDataset ds;
  FeatureSources sources;
};

// Checks that every block the recipes need has an input before anything is
// loaded, then loads only those blocks.
LoadedData load_data(const DataFlags& f, const Resolver& r, const std::vector<FeatureRecipe>& recipes,
                     Echo& echo, bool need_avs = false) {
  const fs::path manifest = existing(r.str(f.manifest, "run.manifest"), "--manifest");
  const std::string avs = r.str(f.avs, "run.avs");
  const std::string logmel = r.str(f.logmel, "run.logmel");
  const std::string emb = r.str(f.embeddings, "run.embeddings");
  const auto dim = r.integer(f.embedding_dim, "run.embedding_dim", 6144);

  bool want_av = need_avs, want_logmel = false, want_ae = false;
  for (const auto& rec : recipes) {
    want_av |= rec.uses(FeatureSource::kActionVector) || rec.uses(FeatureSource::kBinaryActionVector);
    want_logmel |= rec.uses(FeatureSource::kLogMel);
    want_ae |= rec.uses(FeatureSource::kEmbedding);
  }
  if (want_av && avs.empty()) throw UsageError("recipe needs action vectors: pass --avs");
  if (want_logmel && logmel.empty()) throw UsageError("recipe needs log-mel features: pass --logmel");
  if (want_ae && emb.empty()) throw UsageError("recipe needs embeddings: pass --embeddings");
  if (dim <= 0) throw UsageError("--embedding-dim must be positive");

  LoadedData d;
  d.ds = load_manifest(manifest);
  echo.input(manifest);
  echo.options()["manifest"] = manifest.string();
  if (want_av) {
    const fs::path p = existing(avs, "--avs");
    const auto list = load_action_vectors(p);
    for (const auto& av : list) {
      if (av.scale != AvScale::kGraded) throw DataError(p.string() + ": expected graded action vectors");
    }
    d.sources.avs = index_by_clip(list);
    for (const ClipMeta& c : d.ds.clips()) {
      if (!d.sources.avs.contains(c.clip_id)) throw DataError(p.string() + ": no action vector for clip '" + c.clip_id + "'");
    }
    echo.input(p);
    echo.options()["avs"] = p.string();
  }
  if (want_logmel) {
    const fs::path p = existing(logmel, "--logmel");
    d.sources.logmel = load_feature_cache(p, &d.ds);
    echo.input(p);
    echo.options()["logmel"] = p.string();
  }
  if (want_ae) {
    const fs::path p = existing(emb, "--embeddings");
    d.sources.embeddings = load_embeddings(p, static_cast<std::size_t>(dim), &d.ds);
    echo.input(p);
    echo.options()["embeddings"] = p.string();
    echo.options()["embedding_dim"] = dim;
  }
  return d;
}

struct ClassifierFlags {
  std::optional<std::string> classifier, loss;
  std::optional<double> c, lr;
  std::optional<long long> epochs, batch_size;

  void add(CLI::App* app) {
    app->add_option("--classifier", classifier, "svm | dnn (default svm)");
    app->add_option("--C", c, "SVM soft-margin constant (default 35)");
    app->add_option("--loss", loss, "SVM loss: squared_hinge | hinge");
    app->add_option("--lr", lr, "DNN learning rate (default 0.008)");
    app->add_option("--epochs", epochs, "DNN epochs (default 100)");
    app->add_option("--batch-size", batch_size, "DNN minibatch size (default 32)");
  }

  ClassifierSpec resolve(const Resolver& r, Echo& echo) const {
    ClassifierSpec spec;
    spec.kind = parse_classifier(r.str(classifier, "run.classifier", "svm"));
    spec.svm.C = r.real(c, "svm.C", spec.svm.C);
    const std::string l = r.str(loss, "svm.loss", "squared_hinge");
    if (l == "squared_hinge") {
      spec.svm.loss = SvmLoss::kSquaredHinge;
    } else if (l == "hinge") {
      spec.svm.loss = SvmLoss::kHinge;
    } else {
      throw UsageError("--loss must be squared_hinge or hinge");
    }
    if (!(spec.svm.C > 0)) throw UsageError("--C must be positive");
    spec.dnn.lr = r.real(lr, "dnn.lr", spec.dnn.lr);
    spec.dnn.epochs = static_cast<int>(r.integer(epochs, "dnn.epochs", spec.dnn.epochs));
    spec.dnn.batch_size = static_cast<int>(r.integer(batch_size, "dnn.batch_size", spec.dnn.batch_size));
    try {
      spec.dnn.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    json& o = echo.options();
    o["classifier"] = classifier_name(spec.kind);
    if (spec.kind == ClassifierKind::kSvm) {
      o["svm"] = {{"C", spec.svm.C}, {"loss", l}, {"tol", spec.svm.tol}, {"max_iter", spec.svm.max_iter}};
    } else {
      o["dnn"] = {{"lr", spec.dnn.lr}, {"epochs", spec.dnn.epochs}, {"batch_size", spec.dnn.batch_size},
                  {"hidden", spec.dnn.hidden}, {"init", spec.dnn.init}};
    }
    return spec;
  }
};

// Appends records to a JSONL ledger through the staging area.
void append_ledger(Outputs& outs, const fs::path& path, const std::vector<ResultRecord>& records) {
  std::vector<ResultRecord> all;
  if (fs::exists(path)) all = load_results(path);
  all.insert(all.end(), records.begin(), records.end());
  const fs::path temp = outs.stage(path);
  auto f = open_out(temp);
  write_results(all, f);
  close_out(f, temp);
}

RepeatedRunSummary run_recipe(const LoadedData& d, const FeatureRecipe& recipe,
                              const ClassifierSpec& spec, std::uint64_t seed, int runs, int jobs) {
  if (runs < 1) throw UsageError("--runs must be >= 1");
  if (runs == 1) return summarize({run_cv(d.ds, d.sources, recipe, spec, seed, CvOptions{jobs})});
  return repeated_runs(d.ds, d.sources, recipe, spec, seed, runs, jobs);
}

std::string summary_line(const std::string& label, const RepeatedRunSummary& s) {
  std::string line = label + ": " + pct(s.mean);
  if (s.n_runs > 1) line += " (sd " + pct(s.stddev) + ", " + std::to_string(s.n_runs) + " runs)";
  return line;
}

// --- serve ----------------------------------------------------------------

int serve(const ServiceConfig& cfg, std::ostream& out) {
  AnnotationService service(cfg);
  AnnotationServer server(service);
  const int port = server.bind(cfg.host, cfg.port);
  out << "serving campaign '" << cfg.campaign_id << "' on http://" << cfg.host << ":" << port << std::endl;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::atomic<bool> finished{false};
  std::thread waiter([&] {
    const timespec tick{0, 200'000'000};
    while (!finished) {
      if (sigtimedwait(&set, nullptr, &tick) > 0) {
        server.stop();
        return;
      }
    }
  });
  server.listen();
  finished = true;
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &set, nullptr);
  return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Action-vector sound event classification toolkit", "avsec"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  std::optional<long long> jobs_flag;
  app.add_option("--config", config_path, "TOML config file (env AVSEC_* overrides it, flags override both)");
  app.add_option("--jobs", jobs_flag, "Worker threads (default 1)");

  std::function<int(const Resolver&, int)> action;
  auto set_action = [&](auto fn) { action = fn; };

  // extract-features
  auto* ex = app.add_subcommand("extract-features", "Time-averaged log-mel features for every manifest clip");
  std::optional<std::string> ex_manifest, ex_audio, ex_out;
  ex->add_option("--manifest", ex_manifest, "Manifest CSV");
  ex->add_option("--audio-dir", ex_audio, "Directory holding the manifest's WAV files");
  ex->add_option("--out", ex_out, "Feature cache to write");
  ex->callback([&] {
    set_action([&](const Resolver& r, int jobs) {
      Echo echo("extract-features", argc, argv);
      const fs::path manifest = existing(r.str(ex_manifest, "run.manifest"), "--manifest");
      const fs::path audio = existing(r.str(ex_audio, "run.audio_dir"), "--audio-dir");
      const fs::path out_path = require_path(r.str(ex_out, "run.out"), "--out");
      const DspConfig cfg = dsp_config_from(config_path ? Settings::from_file(*config_path) : Settings());
      const FoldedDataset ds = load_manifest(manifest);
      echo.input(manifest);
      echo.options()["audio_dir"] = audio.string();
      echo.options()["dsp"] = dsp_json(cfg);

      std::vector<Eigen::VectorXd> rows(ds.size());
      parallel_for(ds.size(), jobs, [&](std::size_t i) {
        const ClipMeta& c = ds.clips()[i];
        try {
          rows[i] = logmel_mean_from_file(audio / c.filename, cfg);
        } catch (const DataError& e) {
          throw DataError(c.filename + ": " + e.what());
        }
      });
      std::string audio_digest;
      FeatureMap features;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const ClipMeta& c = ds.clips()[i];
        audio_digest += sha256_file(audio / c.filename);
        features[c.clip_id] = FeatureVector{c.clip_id, FeatureKind::logmel(static_cast<std::size_t>(cfg.n_mels)), rows[i]};
      }
      echo.input_digest(audio.string(), sha256_hex(audio_digest));

      Outputs outs;
      save_feature_cache(outs.stage(out_path), features, FeatureKind::logmel(static_cast<std::size_t>(cfg.n_mels)));
      echo.write_beside(outs, out_path);
      outs.commit();
      out << "wrote " << features.size() << " log-mel vectors (" << cfg.n_mels << " dims) to " << out_path.string() << '\n';
      return kExitOk;
    });
  });

  // build-avs
  auto* ba = app.add_subcommand("build-avs", "Spam rejection, agreement and action vectors from raw ratings");
  std::optional<std::string> ba_ann, ba_out, ba_shortfall, ba_scale, ba_manifest, ba_agreement;
  std::optional<double> ba_fraction;
  bool ba_global = false;
  ba->add_option("--annotations", ba_ann, "Annotation CSV (clip_id,annotator_id,<20 actions>)");
  ba->add_option("--out", ba_out, "Action vector CSV to write");
  ba->add_option("--majority-fraction", ba_fraction, "Spam threshold on the share of scores >= 3 (default 0.8)");
  ba->add_flag("--global-rejection", ba_global, "Drop every rating of a flagged annotator");
  ba->add_option("--shortfall", ba_shortfall, "Clips with < 3 ratings: rescale | exclude (default rescale)");
  ba->add_option("--scale", ba_scale, "Output scale: graded | unit | binary (default graded)");
  ba->add_option("--manifest", ba_manifest, "Check coverage against this manifest");
  ba->add_option("--agreement-out", ba_agreement, "Write Fleiss kappa per grouping as JSON");
  ba->callback([&] {
    set_action([&](const Resolver& r, int) {
      Echo echo("build-avs", argc, argv);
      const fs::path ann = existing(r.str(ba_ann, "run.annotations"), "--annotations");
      const fs::path out_path = require_path(r.str(ba_out, "run.out"), "--out");
      const double fraction = r.real(ba_fraction, "annotation.majority_fraction", kDefaultMajorityFraction);
      const bool global = r.flag(ba_global, "annotation.global_rejection");
      const std::string shortfall = r.str(ba_shortfall, "annotation.shortfall", "rescale");
      const AvScale scale = parse_scale(r.str(ba_scale, "annotation.scale", "graded"));
      ShortfallPolicy policy;
      if (shortfall == "rescale") {
        policy = ShortfallPolicy::kRescale;
      } else if (shortfall == "exclude") {
        policy = ShortfallPolicy::kExclude;
      } else {
        throw UsageError("--shortfall must be rescale or exclude");
      }
      echo.options()["majority_fraction"] = fraction;
      echo.options()["rejection_scope"] = global ? "global" : "per_clip";
      echo.options()["shortfall"] = shortfall;
      echo.options()["scale"] = scale_name(scale);

      const auto ratings = load_annotations(ann);
      echo.input(ann);
      const RejectionResult rej =
          reject_spammers(ratings, fraction, global ? RejectionScope::kGlobal : RejectionScope::kPerClip);
      AvBuildReport report;
      const auto graded = build_action_vectors(rej.kept, policy, &report);

      out << "ratings: " << ratings.size() << ", discarded as spam: " << rej.discarded.size()
          << ", clips: " << graded.size() << '\n';
      if (!report.shortfall.empty()) {
        out << "clips with fewer than 3 surviving ratings: " << report.shortfall.size()
            << (policy == ShortfallPolicy::kRescale ? " (rescaled)" : " (excluded)") << '\n';
      }
      if (!graded.empty()) out << "sparsity: " << av_sparsity(graded) << " nonzero dims per clip\n";
      try {
        const auto pooled = agreement_from_ratings(rej.kept, KappaGrouping::kPooled);
        if (auto it = pooled.find("all"); it != pooled.end()) {
          out << "fleiss kappa (pooled): " << it->second.kappa << " (" << band_name(it->second.interpretation) << ")\n";
        }
      } catch (const NumericError& e) {
        out << "fleiss kappa (pooled): undefined (" << e.what() << ")\n";
      } catch (const DataError& e) {
        out << "fleiss kappa (pooled): undefined (" << e.what() << ")\n";
      }

      if (const std::string m = r.str(ba_manifest, "run.manifest"); !m.empty()) {
        const FoldedDataset ds = load_manifest(existing(m, "--manifest"));
        echo.input(m);
        const AvMap by_clip = index_by_clip(graded);
        std::size_t missing = 0;
        for (const ClipMeta& c : ds.clips()) missing += !by_clip.contains(c.clip_id);
        out << "manifest clips without an action vector: " << missing << '\n';
      }

      std::vector<ActionVector> avs;
      for (const auto& av : graded) {
        avs.push_back(scale == AvScale::kGraded ? av : scale == AvScale::kUnit ? to_unit_scale(av) : quantize_av(av));
      }

      Outputs outs;
      const fs::path temp = outs.stage(out_path);
      auto f = open_out(temp);
      write_action_vectors(avs, f);
      close_out(f, temp);
      echo.write_beside(outs, out_path);

      if (const std::string a = r.str(ba_agreement, "run.agreement_out"); !a.empty()) {
        json j;
        const std::pair<const char*, KappaGrouping> groupings[] = {
            {"pooled", KappaGrouping::kPooled}, {"per_action", KappaGrouping::kPerAction}, {"per_clip", KappaGrouping::kPerClip}};
        for (const auto& [name, g] : groupings) {
          json group = json::object();
          try {
            for (const auto& [key, rep] : agreement_from_ratings(rej.kept, g)) {
              group[key] = {{"kappa", rep.kappa}, {"n_items", rep.n_items}, {"n_raters", rep.n_raters},
                            {"band", band_name(rep.interpretation)}};
            }
          } catch (const Error& e) {
            group = {{"error", e.what()}};
          }
          j[name] = group;
        }
        const fs::path atemp = outs.stage(a);
        auto af = open_out(atemp);
        af << j.dump(2) << '\n';
        close_out(af, atemp);
        echo.write_beside(outs, a);
      }
      outs.commit();
      out << "wrote " << avs.size() << " action vectors to " << out_path.string() << '\n';
      return kExitOk;
    });
  });

  // train
  auto* tr = app.add_subcommand("train", "Train one classifier on the given folds and save it");
  DataFlags tr_data;
  ClassifierFlags tr_cls;
  std::optional<std::string> tr_recipe, tr_folds, tr_out;
  std::optional<long long> tr_seed;
  tr_data.add(tr);
  tr_cls.add(tr);
  tr->add_option("--recipe", tr_recipe, "Feature recipe, e.g. av+ae or av:l2,std+logmel");
  tr->add_option("--folds", tr_folds, "Training folds (default 1,2,3,4,5)");
  tr->add_option("--seed", tr_seed, "Seed (default 0)");
  tr->add_option("--out", tr_out, "Model file to write");
  tr->callback([&] {
    set_action([&](const Resolver& r, int) {
      Echo echo("train", argc, argv);
      const FeatureRecipe recipe = FeatureRecipe::parse(r.str(tr_recipe, "run.recipe", "av"));
      const std::set<int> folds = parse_int_list(r.str(tr_folds, "run.folds", "1,2,3,4,5"), "--folds");
      for (int f : folds) {
        if (f < 1 || f > kNumFolds) throw UsageError("--folds entries must be 1-5");
      }
      const auto seed = static_cast<std::uint64_t>(r.integer(tr_seed, "run.seed", 0));
      const fs::path out_path = require_path(r.str(tr_out, "run.out"), "--out");
      const ClassifierSpec spec = tr_cls.resolve(r, echo);
      const LoadedData d = load_data(tr_data, r, {recipe}, echo);
      echo.options()["recipe"] = recipe.to_string();
      echo.options()["folds"] = folds;
      echo.options()["seed"] = seed;

      const DesignMatrix dm = build_design_matrix(d.ds, d.sources, recipe);
      const TrainedModel model = train_on_folds(dm, folds, spec, seed, recipe.to_string());
      Outputs outs;
      save_model(outs.stage(out_path), model);
      echo.write_beside(outs, out_path);
      outs.commit();
      out << "trained " << classifier_name(spec.kind) << " on " << dm.kind.tag() << ", wrote " << out_path.string() << '\n';
      return kExitOk;
    });
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "5-fold cross-validation; appends runs to a results ledger");
  DataFlags ev_data;
  ClassifierFlags ev_cls;
  std::optional<std::string> ev_recipe, ev_out, ev_tag, ev_confusion;
  std::optional<long long> ev_seed, ev_runs;
  ev_data.add(ev);
  ev_cls.add(ev);
  ev->add_option("--recipe", ev_recipe, "Feature recipe (default av)");
  ev->add_option("--runs", ev_runs, "Repeated runs with seeds seed, seed+1, ... (default 1)");
  ev->add_option("--seed", ev_seed, "Base seed (default 0)");
  ev->add_option("--tag", ev_tag, "Ledger tag (default main)");
  ev->add_option("--out", ev_out, "Results ledger (JSON lines), appended");
  ev->add_option("--confusion-out", ev_confusion, "Ranked confusion pairs of the first run as CSV");
  ev->callback([&] {
    set_action([&](const Resolver& r, int jobs) {
      Echo echo("evaluate", argc, argv);
      const FeatureRecipe recipe = FeatureRecipe::parse(r.str(ev_recipe, "run.recipe", "av"));
      const int runs = static_cast<int>(r.integer(ev_runs, "run.runs", 1));
      const auto seed = static_cast<std::uint64_t>(r.integer(ev_seed, "run.seed", 0));
      const std::string tag = r.str(ev_tag, "run.tag", "main");
      const fs::path out_path = require_path(r.str(ev_out, "run.out"), "--out");
      if (runs < 1) throw UsageError("--runs must be >= 1");
      const ClassifierSpec spec = ev_cls.resolve(r, echo);
      const LoadedData d = load_data(ev_data, r, {recipe}, echo);
      echo.options()["recipe"] = recipe.to_string();
      echo.options()["runs"] = runs;
      echo.options()["seed"] = seed;
      echo.options()["tag"] = tag;

      const RepeatedRunSummary s = run_recipe(d, recipe, spec, seed, runs, jobs);
      auto records = records_from(s, recipe, static_cast<int>(d.ds.num_classes()), tag);
      for (auto& rec : records) rec.inputs = echo.inputs();

      Outputs outs;
      append_ledger(outs, out_path, records);
      echo.write_beside(outs, out_path);
      const auto pairs = confusion_report(s.runs.front(), d.ds.class_names());
      if (const std::string c = r.str(ev_confusion, "run.confusion_out"); !c.empty()) {
        const fs::path ctemp = outs.stage(c);
        auto f = open_out(ctemp);
        f << "truth,truth_name,predicted,predicted_name,count\n";
        for (const auto& p : pairs) {
          f << csv::join({std::to_string(p.truth), p.truth_name, std::to_string(p.predicted), p.predicted_name,
                          std::to_string(p.count)})
            << '\n';
        }
        close_out(f, ctemp);
        echo.write_beside(outs, c);
      }
      outs.commit();
      out << summary_line(recipe.short_name() + " / " + std::string(classifier_name(spec.kind)), s) << '\n';
      for (std::size_t i = 0; i < std::min<std::size_t>(5, pairs.size()); ++i) {
        out << "  confused: " << pairs[i].truth_name << " -> " << pairs[i].predicted_name << " (" << pairs[i].count << ")\n";
      }
      return kExitOk;
    });
  });

  // ablate
  auto* ab = app.add_subcommand("ablate", "Calling-class removal or AV quantization ablation");
  DataFlags ab_data;
  ClassifierFlags ab_cls;
  std::optional<std::string> ab_kind, ab_action, ab_remove, ab_recipes, ab_out;
  std::optional<long long> ab_count, ab_seed, ab_runs;
  ab_data.add(ab);
  ab_cls.add(ab);
  ab->add_option("--kind", ab_kind, "calling | quantization")->required();
  ab->add_option("--action", ab_action, "Action ranking the classes to remove (default calling)");
  ab->add_option("--count", ab_count, "Number of classes to remove (default 11)");
  ab->add_option("--remove", ab_remove, "Explicit comma-separated class targets to remove");
  ab->add_option("--recipes", ab_recipes, "Comma-separated recipes for the class ablation (default av,ae)");
  ab->add_option("--runs", ab_runs, "Runs per condition (default 1)");
  ab->add_option("--seed", ab_seed, "Base seed (default 0)");
  ab->add_option("--out", ab_out, "Results ledger (JSON lines), appended");
  ab->callback([&] {
    set_action([&](const Resolver& r, int jobs) {
      Echo echo("ablate", argc, argv);
      const std::string kind = *ab_kind;
      const int runs = static_cast<int>(r.integer(ab_runs, "run.runs", 1));
      const auto seed = static_cast<std::uint64_t>(r.integer(ab_seed, "run.seed", 0));
      const fs::path out_path = require_path(r.str(ab_out, "run.out"), "--out");
      if (runs < 1) throw UsageError("--runs must be >= 1");
      const ClassifierSpec spec = ab_cls.resolve(r, echo);
      echo.options()["kind"] = kind;
      echo.options()["runs"] = runs;
      echo.options()["seed"] = seed;
      std::vector<ResultRecord> records;

      if (kind == "quantization") {
        const auto graded = FeatureRecipe::parse("av+ae");
        const auto binary = FeatureRecipe::parse("avq+ae");
        const LoadedData d = load_data(ab_data, r, {graded, binary}, echo);
        const PairedResult p = quantization_ablation(d.ds, d.sources, spec, seed, runs, jobs);
        const int n = static_cast<int>(d.ds.num_classes());
        for (auto rec : records_from(p.a, graded, n, "ablation:quantization")) records.push_back(rec);
        for (auto rec : records_from(p.b, binary, n, "ablation:quantization")) records.push_back(rec);
        out << summary_line(p.label_a, p.a) << '\n' << summary_line(p.label_b, p.b) << '\n';
        out << "delta: " << pct(p.delta()) << '\n';
      } else if (kind == "calling") {
        std::vector<FeatureRecipe> recipes;
        for (const auto& s : split(r.str(ab_recipes, "ablation.recipes", "av,ae"), ',')) {
          recipes.push_back(FeatureRecipe::parse(s));
        }
        if (recipes.empty()) throw UsageError("--recipes is empty");
        const std::string remove = r.str(ab_remove, "ablation.remove");
        const LoadedData d = load_data(ab_data, r, recipes, echo, remove.empty());
        std::set<int> removed;
        if (!remove.empty()) {
          removed = parse_int_list(remove, "--remove");
        } else {
          const std::string action = r.str(ab_action, "ablation.action", "calling");
          const auto count = r.integer(ab_count, "ablation.count", 11);
          if (count < 0) throw UsageError("--count must be >= 0");
          removed = top_classes_for_action(d.ds, d.sources.avs, action, static_cast<std::size_t>(count));
          echo.options()["action"] = action;
        }
        echo.options()["removed"] = removed;
        out << "removed classes:";
        for (int t : removed) out << ' ' << t << ':' << d.ds.class_names().at(t);
        out << '\n';
        for (const auto& recipe : recipes) {
          const PairedResult p = ablate_classes(d.ds, removed, d.sources, recipe, spec, seed, runs, jobs);
          const int n = static_cast<int>(d.ds.num_classes());
          for (auto rec : records_from(p.a, recipe, n, "ablation:calling:full")) records.push_back(rec);
          for (auto rec : records_from(p.b, recipe, n - static_cast<int>(removed.size()), "ablation:calling:reduced")) {
            records.push_back(rec);
          }
          out << recipe.short_name() << ": " << p.label_a << " " << pct(p.a.mean) << " -> " << p.label_b << " "
              << pct(p.b.mean) << " (delta " << pct(p.delta()) << ")\n";
        }
      } else {
        throw UsageError("--kind must be calling or quantization");
      }
      for (auto& rec : records) rec.inputs = echo.inputs();
      Outputs outs;
      append_ledger(outs, out_path, records);
      echo.write_beside(outs, out_path);
      outs.commit();
      return kExitOk;
    });
  });

  // cluster
  auto* cl = app.add_subcommand("cluster", "K-means over action vectors with dominant-action labels");
  std::optional<std::string> cl_avs, cl_out, cl_manifest, cl_class_avs;
  std::optional<long long> cl_k, cl_seed, cl_restarts, cl_iter;
  cl->add_option("--avs", cl_avs, "Graded action vector CSV");
  cl->add_option("--k", cl_k, "Number of clusters (default 8)");
  cl->add_option("--seed", cl_seed, "Seed (default 0)");
  cl->add_option("--restarts", cl_restarts, "Restarts with seeds seed, seed+1, ...; lowest inertia kept (default 1)");
  cl->add_option("--max-iter", cl_iter, "Lloyd iterations (default 300)");
  cl->add_option("--out", cl_out, "clip_id,cluster,<20 actions> CSV");
  cl->add_option("--manifest", cl_manifest, "Manifest, for the class-average matrix");
  cl->add_option("--class-avs", cl_class_avs, "Write the class-average AV matrix here (needs --manifest)");
  cl->callback([&] {
    set_action([&](const Resolver& r, int) {
      Echo echo("cluster", argc, argv);
      const fs::path avs_path = existing(r.str(cl_avs, "run.avs"), "--avs");
      const fs::path out_path = require_path(r.str(cl_out, "run.out"), "--out");
      const int k = static_cast<int>(r.integer(cl_k, "cluster.k", 8));
      const auto seed = static_cast<std::uint64_t>(r.integer(cl_seed, "run.seed", 0));
      const int restarts = static_cast<int>(r.integer(cl_restarts, "cluster.restarts", 1));
      const int max_iter = static_cast<int>(r.integer(cl_iter, "cluster.max_iter", 300));
      const std::string class_avs = r.str(cl_class_avs, "run.class_avs");
      const std::string manifest = r.str(cl_manifest, "run.manifest");
      if (!class_avs.empty() && manifest.empty()) throw UsageError("--class-avs needs --manifest");
      echo.options()["k"] = k;
      echo.options()["seed"] = seed;
      echo.options()["restarts"] = restarts;
      echo.options()["max_iter"] = max_iter;

      const auto avs = load_action_vectors(avs_path);
      echo.input(avs_path);
      if (avs.empty()) throw DataError(avs_path.string() + ": no action vectors");
      for (const auto& av : avs) {
        if (av.scale != AvScale::kGraded) throw DataError(avs_path.string() + ": expected graded action vectors");
      }
      Eigen::MatrixXd points(static_cast<Eigen::Index>(avs.size()), kNumActions);
      for (std::size_t i = 0; i < avs.size(); ++i) {
        for (std::size_t a = 0; a < kNumActions; ++a) {
          points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = avs[i].values[a];
        }
      }
      const ClusterResult res = kmeans_restarts(points, k, seed, restarts, max_iter);

      Outputs outs;
      const fs::path temp = outs.stage(out_path);
      auto f = open_out(temp);
      write_cluster_assignments(res, avs, f);
      close_out(f, temp);
      echo.write_beside(outs, out_path);
      if (!class_avs.empty()) {
        const FoldedDataset ds = load_manifest(existing(manifest, "--manifest"));
        echo.input(manifest);
        const ClassAvMatrix m = class_average_avs(ds, index_by_clip(avs));
        const fs::path ctemp = outs.stage(class_avs);
        auto cf = open_out(ctemp);
        write_class_avs(m, cf);
        close_out(cf, ctemp);
        echo.write_beside(outs, class_avs);
      }
      outs.commit();
      out << "k-means k=" << k << ": inertia " << res.inertia << " after " << res.iterations << " iterations"
          << (res.converged ? "" : " (not converged)") << '\n';
      for (const auto& l : label_clusters(res)) {
        out << "  cluster " << l.cluster << " (" << l.size << " clips): " << (l.label.empty() ? "-" : l.label) << '\n';
      }
      return kExitOk;
    });
  });

  // report
  auto* rp = app.add_subcommand("report", "Accuracy table from a results ledger");
  std::optional<std::string> rp_in, rp_format, rp_out;
  rp->add_option("--in", rp_in, "Results ledger (JSON lines)");
  rp->add_option("--format", rp_format, "table | csv (default table)");
  rp->add_option("--out", rp_out, "Write here instead of stdout");
  rp->callback([&] {
    set_action([&](const Resolver& r, int) {
      const fs::path in = existing(r.str(rp_in, "report.in"), "--in");
      const ReportFormat fmt = parse_report_format(r.str(rp_format, "report.format", "table"));
      const auto rows = accuracy_table(load_results(in));
      if (const std::string o = r.str(rp_out, "report.out"); !o.empty()) {
        Echo echo("report", argc, argv);
        echo.input(in);
        Outputs outs;
        const fs::path temp = outs.stage(o);
        auto f = open_out(temp);
        write_report(rows, fmt, f);
        close_out(f, temp);
        echo.write_beside(outs, o);
        outs.commit();
      } else {
        write_report(rows, fmt, out);
      }
      return kExitOk;
    });
  });

  // serve
  auto* sv = app.add_subcommand("serve", "Run the annotation service");
  std::optional<std::string> sv_host, sv_data, sv_manifest, sv_audio, sv_ui, sv_campaign;
  std::optional<long long> sv_port;
  sv->add_option("--host", sv_host, "Bind address (default 127.0.0.1)");
  sv->add_option("--port", sv_port, "Port (default 8080; 0 picks a free one)");
  sv->add_option("--data-dir", sv_data, "Directory for campaign logs");
  sv->add_option("--manifest", sv_manifest, "Campaign manifest CSV");
  sv->add_option("--audio-dir", sv_audio, "Directory holding the manifest's WAV files");
  sv->add_option("--ui-dir", sv_ui, "Static annotation UI bundle");
  sv->add_option("--campaign", sv_campaign, "Campaign id (default esc50)");
  sv->callback([&] {
    set_action([&](const Resolver&, int) {
      const Settings s = config_path ? Settings::from_file(*config_path) : Settings();
      ServiceConfig cfg = service_config_from(s);
      if (sv_host) cfg.host = *sv_host;
      if (sv_port) cfg.port = static_cast<int>(*sv_port);
      if (sv_data) cfg.data_dir = *sv_data;
      if (sv_manifest) cfg.manifest = *sv_manifest;
      if (sv_audio) cfg.audio_dir = *sv_audio;
      if (sv_ui) cfg.ui_dir = *sv_ui;
      if (sv_campaign) cfg.campaign_id = *sv_campaign;
      if (cfg.port < 0 || cfg.port > 65535) throw UsageError("--port out of range");
      existing(cfg.manifest.string(), "--manifest");
      existing(cfg.audio_dir.string(), "--audio-dir");
      return serve(cfg, out);
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Settings settings = config_path ? Settings::from_file(*config_path) : Settings();
    const Resolver resolver(settings);
    const long long jobs = resolver.integer(jobs_flag, "run.jobs", 1);
    if (jobs < 1) throw UsageError("--jobs must be >= 1");
    return action(resolver, static_cast<int>(jobs));
  } catch (...) {
    const auto e = std::current_exception();
    try {
      std::rethrow_exception(e);
    } catch (const std::exception& ex) {
      err << "avsec: error: " << ex.what() << '\n';
    } catch (...) {
      err << "avsec: unknown error\n";
    }
    return exit_code_for(e);
  }
}

}  // namespace avsec::cli
