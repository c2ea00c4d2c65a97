#include "hcmen/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hcmen/error.hpp"
#include "json.hpp"

namespace hcmen {

namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Valid:
      return "valid";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == s) out.push_back(i);
  return out;
}

std::array<std::size_t, kNumModalities> Dataset::input_dims() const {
  std::array<std::size_t, kNumModalities> dims{0, 0, 0};
  for (const auto& u : items) {
    for (auto m : kModalities) {
      const std::size_t d = u.features[index_of(m)].dims;
      auto& slot = dims[index_of(m)];
      if (slot == 0) {
        slot = d;
      } else if (slot != d) {
        throw DimensionError("dataset: " + std::string(modality_name(m)) + " width " +
                             std::to_string(d) + " in '" + u.id + "' differs from " +
                             std::to_string(slot));
      }
    }
  }
  return dims;
}

ModalityBatch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  ModalityBatch batch;
  for (auto i : indices) {
    const auto& u = data.items.at(i);
    batch.ids.push_back(u.id);
    batch.labels.push_back(u.label);
    for (auto m : kModalities) batch.features[index_of(m)].push_back(u.features[index_of(m)]);
  }
  return batch;
}

namespace {

FeatureSequence read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file " + path.string());
  std::vector<float> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t width = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      std::string cell(p, comma);
      char* parsed_end = nullptr;
      const float v = std::strtof(cell.c_str(), &parsed_end);
      if (cell.empty() || parsed_end != cell.c_str() + cell.size()) {
        throw IoError("bad number '" + cell + "' in " + path.string() + " row " +
                      std::to_string(rows + 1));
      }
      values.push_back(v);
      ++width;
      p = comma + 1;
    }
    if (rows == 0) {
      cols = width;
    } else if (width != cols) {
      throw IoError("ragged row " + std::to_string(rows + 1) + " in " + path.string());
    }
    ++rows;
  }
  if (rows == 0) throw IoError("empty feature file " + path.string());
  return FeatureSequence::from_values(rows, cols, std::move(values));
}

void write_csv(const FeatureSequence& seq, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[32];
  for (std::size_t t = 0; t < seq.steps; ++t) {
    for (std::size_t j = 0; j < seq.dims; ++j) {
      if (j) out << ',';
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(seq.values[t * seq.dims + j]));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest = root / "manifest.jsonl";
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open dataset manifest " + manifest.string());
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Utterance u;
    try {
      const auto rec = nlohmann::json::parse(line);
      u.id = rec.at("id").get<std::string>();
      u.label = rec.at("label").get<float>();
      u.split = parse_split(rec.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!(u.label >= -3.0f && u.label <= 3.0f)) {
      throw IoError("manifest line " + std::to_string(line_no) + ": label outside [-3, 3]");
    }
    for (auto m : kModalities) {
      u.features[index_of(m)] = read_csv(root / std::string(modality_name(m)) / (u.id + ".csv"));
    }
    data.items.push_back(std::move(u));
  }
  data.input_dims();
  return data;
}

void write_dataset(const Dataset& data, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  for (auto m : kModalities) fs::create_directories(root / std::string(modality_name(m)), ec);
  if (ec) throw IoError("cannot create dataset directory " + root.string() + ": " + ec.message());

  std::ofstream manifest(root / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + root.string());
  for (const auto& u : data.items) {
    nlohmann::json rec{{"id", u.id}, {"label", static_cast<double>(u.label)},
                       {"split", std::string(split_name(u.split))}};
    manifest << rec.dump() << '\n';
    for (auto m : kModalities) {
      write_csv(u.features[index_of(m)], root / std::string(modality_name(m)) / (u.id + ".csv"));
    }
  }
  if (!manifest) throw IoError("failed writing manifest in " + root.string());
}

Dataset generate_synthetic(const SynthOptions& options) {
  if (options.count == 0) throw ContractError("generate_synthetic: need at least one utterance");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> latent(-3.0, 3.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  struct Projection {
    std::vector<double> level, temporal, nuisance;
  };
  std::array<Projection, kNumModalities> proj;
  for (auto m : kModalities) {
    const std::size_t d = options.dims[index_of(m)];
    if (d == 0 || options.lengths[index_of(m)] == 0) {
      throw ContractError("generate_synthetic: lengths and dims must be positive");
    }
    auto& p = proj[index_of(m)];
    p.level.resize(d);
    p.temporal.resize(d);
    p.nuisance.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      p.level[j] = gauss(rng);
      p.temporal[j] = 0.5 * gauss(rng);
      p.nuisance[j] = gauss(rng);
    }
    if (m == Modality::Text) {
      // Text level direction has feature mean exactly 1, so the time-and-
      // feature average of a noiseless text stream equals s.
      double mean = 0;
      for (double v : p.level) mean += v;
      mean /= static_cast<double>(d);
      for (double& v : p.level) v = 1.0 + 0.5 * (v - mean);
      if (d == 1) p.level[0] = 1.0;
    }
  }

  const std::size_t n_train = options.count * 7 / 10;
  const std::size_t n_valid = options.count / 10;
  Dataset data;
  data.items.reserve(options.count);
  char id_buf[32];
  for (std::size_t i = 0; i < options.count; ++i) {
    Utterance u;
    std::snprintf(id_buf, sizeof id_buf, "utt%05zu", i);
    u.id = id_buf;
    u.split = i < n_train ? Split::Train : (i < n_train + n_valid ? Split::Valid : Split::Test);
    const double s = latent(rng);
    u.label = static_cast<float>(s);
    const double phi = phase(rng);
    for (auto m : kModalities) {
      const std::size_t k = index_of(m);
      const auto& p = proj[k];
      const std::size_t base = options.lengths[k];
      const auto jitter = static_cast<long>(std::floor(options.length_jitter * static_cast<double>(base)));
      std::uniform_int_distribution<long> len_dist(-jitter, jitter);
      const std::size_t steps = static_cast<std::size_t>(std::max<long>(1, static_cast<long>(base) + len_dist(rng)));
      const std::size_t d = options.dims[k];
      const double sigma = options.noise[k] * options.noise_scale;
      const double nuisance = gauss(rng);
      std::vector<float> values(steps * d);
      for (std::size_t t = 0; t < steps; ++t) {
        const double wave =
            std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(steps) + phi);
        for (std::size_t j = 0; j < d; ++j) {
          double v = s * p.level[j] + 0.5 * s * wave * p.temporal[j];
          if (sigma > 0.0) v += sigma * (nuisance * p.nuisance[j] + gauss(rng));
          values[t * d + j] = static_cast<float>(v);
        }
      }
      u.features[k] = FeatureSequence::from_values(steps, d, std::move(values));
    }
    data.items.push_back(std::move(u));
  }
  return data;
}

}  // namespace hcmen
