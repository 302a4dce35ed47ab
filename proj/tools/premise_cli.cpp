// premise: generate | train | eval | ablate | bench | trace
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "premise/commands.hpp"

namespace {

using namespace premise;

struct Options {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::string checkpoint;
  std::string split = "test";
  std::string product;
  std::string review;
  std::string out;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config_file.empty() ? RunConfig() : RunConfig::load(o.config_file);
  // C=auto must see the final K, so apply it last.
  for (const auto& [key, value] : o.overrides)
    if (key != "C") c.set(key, value);
  if (auto it = o.overrides.find("C"); it != o.overrides.end()) c.set("C", it->second);
  c.validate();
  return c;
}

std::string default_checkpoint(const RunConfig& c, const Options& o) {
  return o.checkpoint.empty() ? (std::filesystem::path(c.output_dir) / "model.ckpt").string() : o.checkpoint;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fusion-free multimodal review helpfulness ranking via multi-scale matching scores"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_file, "key=value config file; flags override it")->check(CLI::ExistingFile);
  for (const auto& key : RunConfig::keys()) {
    app.add_option_function<std::string>(
           "--" + key, [&o, key](const std::string& v) { o.overrides[key] = v; },
           "config key " + key + " (default " + RunConfig().get(key) + ")")
        ->group("Config keys");
  }

  auto* gen = app.add_subcommand("generate", "write a planted synthetic dataset as train/dev/test jsonl");
  auto* trn = app.add_subcommand("train", "train and write model.ckpt, train_log.csv, config.txt");
  auto* evl = app.add_subcommand("eval", "score a split with a checkpoint; writes metrics.csv/json");
  auto* abl = app.add_subcommand("ablate", "train+evaluate the full model and seven masked variants");
  auto* bch = app.add_subcommand("bench", "analytic and counted matching vs fusion cost sweep");
  auto* trc = app.add_subcommand("trace", "dump every matching score of one pair");
  for (auto* sc : {evl, trc}) {
    sc->add_option("--checkpoint", o.checkpoint, "defaults to <output_dir>/model.ckpt");
    sc->add_option("--split", o.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  }
  trc->add_option("--product", o.product, "product id")->required();
  trc->add_option("--review", o.review, "review id")->required();
  trc->add_option("--out", o.out, "output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const RunConfig config = resolve_config(o);
    if (*gen) {
      cmd_generate(config, std::cout);
    } else if (*trn) {
      cmd_train(config, std::cout);
    } else if (*evl) {
      cmd_eval(config, default_checkpoint(config, o), split_from_string(o.split), std::cout);
    } else if (*abl) {
      const auto rows = cmd_ablate(config, std::cout);
      std::cout << rows.size() << " ablation rows written\n";
    } else if (*bch) {
      cmd_bench(config, std::cout);
    } else if (*trc) {
      std::optional<std::ofstream> file;
      if (!o.out.empty()) {
        file.emplace(o.out);
        if (!*file) throw std::runtime_error("cannot write " + o.out);
      }
      std::cout << std::flush;
      cmd_trace(config, default_checkpoint(config, o), o.product, o.review, split_from_string(o.split),
                file ? *file : std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "premise: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
