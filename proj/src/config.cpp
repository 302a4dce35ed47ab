#include "premise/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace premise {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_same_v<T, double>)
      v = std::stod(s, &used);
    else if constexpr (std::is_same_v<T, std::uint64_t>)
      v = std::stoull(s, &used);
    else
      v = static_cast<T>(std::stoll(s, &used));
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "invalid number '" + s + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key, "invalid boolean '" + s + "'");
}

struct Field_ {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define PREMISE_INT(KEY, MEMBER)                                                         \
  Field_{KEY, [](const RunConfig& c) { return std::to_string(c.MEMBER); },               \
         [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<int>(KEY, v); }}
#define PREMISE_DOUBLE(KEY, MEMBER)                                                      \
  Field_{KEY, [](const RunConfig& c) { return fmt(c.MEMBER); },                          \
         [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<double>(KEY, v); }}
#define PREMISE_BOOL(KEY, MEMBER)                                                        \
  Field_{KEY, [](const RunConfig& c) { return fmt(c.MEMBER); },                          \
         [](RunConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); }}
#define PREMISE_STRING(KEY, MEMBER)                                                      \
  Field_{KEY, [](const RunConfig& c) { return c.MEMBER; },                               \
         [](RunConfig& c, const std::string& v) { c.MEMBER = v; }}

const std::vector<Field_>& fields() {
  static const std::vector<Field_> table = {
      PREMISE_STRING("dataset_dir", dataset_dir),
      PREMISE_STRING("embedding_file", embedding_file),
      PREMISE_STRING("output_dir", output_dir),
      // model
      PREMISE_INT("vocab_size", model.vocab_size),
      PREMISE_INT("d_e", model.embed_dim),
      PREMISE_INT("d", model.dim),
      PREMISE_INT("d_v", model.region_dim),
      PREMISE_INT("n_heads", model.n_heads),
      PREMISE_INT("layers", model.layers),
      PREMISE_INT("K", model.K),
      PREMISE_INT("r", model.refine.cluster_size),
      Field_{"C",
             [](const RunConfig& c) {
               return c.centers_auto ? std::string("auto") : std::to_string(c.model.refine.centers);
             },
             [](RunConfig& c, const std::string& v) {
               if (v == "auto") {
                 c.centers_auto = true;
               } else {
                 c.centers_auto = false;
                 c.model.refine.centers = parse_number<int>("C", v);
               }
             }},
      PREMISE_INT("max_iters", model.refine.max_iters),
      PREMISE_BOOL("accelerated_kmeans", model.refine.accelerated),
      PREMISE_BOOL("refine", model.refine_enabled),
      PREMISE_BOOL("positional_encoding", model.positional_encoding),
      PREMISE_DOUBLE("positional_scale", model.positional_scale),
      PREMISE_BOOL("vision_layer2", model.vision_layer2),
      PREMISE_BOOL("train_embedding", model.train_embedding),
      Field_{"kinds", [](const RunConfig& c) { return c.model.kinds.str(); },
             [](RunConfig& c, const std::string& v) {
               try {
                 c.model.kinds = KindMask::parse(v);
               } catch (const std::invalid_argument& e) {
                 throw ConfigError("kinds", e.what());
               }
             }},
      // training
      PREMISE_DOUBLE("lr", train.adam.lr),
      PREMISE_INT("B", train.batch_size),
      PREMISE_INT("n_neg", train.n_neg),
      PREMISE_INT("epochs", train.epochs),
      PREMISE_INT("patience", train.patience),
      Field_{"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
             [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("seed", v); }},
      PREMISE_INT("tau", train.metrics.relevance_threshold),
      Field_{"gain",
             [](const RunConfig& c) {
               return std::string(c.train.metrics.gain == Gain::exponential ? "exponential" : "linear");
             },
             [](RunConfig& c, const std::string& v) {
               if (v == "exponential")
                 c.train.metrics.gain = Gain::exponential;
               else if (v == "linear")
                 c.train.metrics.gain = Gain::linear;
               else
                 throw ConfigError("gain", "expected exponential or linear");
             }},
      // generator
      PREMISE_INT("n_products", generator.n_products),
      PREMISE_INT("reviews_per_product", generator.reviews_per_product),
      PREMISE_INT("n_topics", generator.n_topics),
      PREMISE_DOUBLE("noise", generator.noise),
      PREMISE_INT("product_sentences", generator.product_sentences),
      PREMISE_INT("review_sentences", generator.review_sentences),
      PREMISE_INT("tokens_per_sentence", generator.tokens_per_sentence),
      PREMISE_INT("product_images", generator.product_images),
      PREMISE_INT("review_images", generator.review_images),
      PREMISE_INT("regions_per_image", generator.regions_per_image),
      PREMISE_DOUBLE("review_image_prob", generator.review_image_prob),
      PREMISE_DOUBLE("region_variation", generator.region_variation),
      PREMISE_DOUBLE("train_fraction", train_fraction),
      PREMISE_DOUBLE("dev_fraction", dev_fraction),
      // bench
      PREMISE_STRING("bench_lengths", bench_lengths),
      PREMISE_DOUBLE("bench_k", bench_k),
      PREMISE_INT("bench_intervals", bench_intervals),
      PREMISE_INT("bench_iterations", bench_iterations),
  };
  return table;
}

#undef PREMISE_INT
#undef PREMISE_DOUBLE
#undef PREMISE_BOOL
#undef PREMISE_STRING

const Field_& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError(key, "unknown configuration key");
}

}  // namespace

RunConfig::RunConfig() { resolve(); }

int RunConfig::effective_centers() const {
  return centers_auto ? auto_centers(model.K) : model.refine.centers;
}

void RunConfig::resolve() {
  if (model.K >= 1) model.refine.centers = effective_centers();
  generator.vocab_size = model.vocab_size;
  generator.region_dim = model.region_dim;
  model.seed = train.seed;
}

void RunConfig::validate() const {
  model.validate();
  if (train.batch_size < 1) throw ConfigError("B", "must be at least 1");
  if (train.n_neg < 1) throw ConfigError("n_neg", "must be at least 1");
  if (train.epochs < 0) throw ConfigError("epochs", "must be non-negative");
  if (train.patience < 0) throw ConfigError("patience", "must be non-negative");
  if (!(train.adam.lr >= 0.0)) throw ConfigError("lr", "must be non-negative");
  if (bench_intervals < 1) throw ConfigError("bench_intervals", "must be at least 1");
  if (bench_iterations < 1) throw ConfigError("bench_iterations", "must be at least 1");
  if (!(bench_k > 1.0)) throw ConfigError("bench_k", "must exceed 1");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, value);
  resolve();
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return out;
}

std::string RunConfig::emit() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    field(trim(line.substr(0, eq))).set(c, trim(line.substr(eq + 1)));
  }
  c.resolve();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace premise
