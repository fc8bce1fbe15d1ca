#include "hgcl/harness/dataset.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hgcl/errors.hpp"
#include "hgcl/init.hpp"
#include "hgcl/serialize.hpp"
#include "json.hpp"

namespace hgcl::harness {
namespace {

struct Motifs {
  std::vector<std::vector<double>> coarse_dir;    // per coarse class, token_dim
  std::vector<std::array<double, 3>> coarse_wave;  // row freq, col freq, phase
  std::vector<Tensor> patches;                     // per label, (P*P) x token_dim
};

Motifs make_motifs(const SyntheticSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, "dataset/motifs"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Motifs m;
  for (std::size_t c = 0; c < spec.num_coarse; ++c) {
    std::vector<double> dir(spec.token_dim);
    double norm = 0.0;
    for (double& v : dir) {
      v = normal(rng);
      norm += v * v;
    }
    for (double& v : dir) v /= std::sqrt(norm);
    m.coarse_dir.push_back(std::move(dir));
    // Low frequencies: at most one cycle across the grid along each axis.
    const double fr = static_cast<double>(c % 2);
    const double fc = static_cast<double>((c / 2) % 2 == 0 ? 1 : 0);
    m.coarse_wave.push_back({fr, fc, phase(rng)});
  }
  const std::size_t cells = spec.signal_patch_size * spec.signal_patch_size;
  // Every cell of a class patch points along the same class direction, so the
  // motif survives mean pooling.
  for (std::size_t k = 0; k < spec.num_classes(); ++k) {
    std::vector<double> dir(spec.token_dim);
    double norm = 0.0;
    for (double& v : dir) {
      v = normal(rng);
      norm += v * v;
    }
    Tensor patch({cells, spec.token_dim});
    for (std::size_t i = 0; i < cells; ++i)
      for (std::size_t j = 0; j < spec.token_dim; ++j) patch(i, j) = dir[j] / std::sqrt(norm);
    m.patches.push_back(std::move(patch));
  }
  return m;
}

Tensor render(const SyntheticSpec& spec, const Motifs& m, int label, std::size_t pr,
              std::size_t pc) {
  const std::size_t g = spec.grid, d = spec.token_dim;
  const auto coarse = static_cast<std::size_t>(label) / spec.fine_per_coarse;
  const auto& dir = m.coarse_dir[coarse];
  const auto& wave = m.coarse_wave[coarse];
  Tensor t({g * g, d});
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const double arg = 2.0 * std::numbers::pi *
                             (wave[0] * static_cast<double>(r) + wave[1] * static_cast<double>(c)) /
                             static_cast<double>(g) +
                         wave[2];
      const double amp = spec.coarse_amplitude * (0.5 + 0.5 * std::cos(arg));
      for (std::size_t j = 0; j < d; ++j) t(r * g + c, j) = amp * dir[j];
    }
  }
  const std::size_t p = spec.signal_patch_size;
  const Tensor& patch = m.patches[static_cast<std::size_t>(label)];
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < p; ++k)
      for (std::size_t j = 0; j < d; ++j)
        t((pr + i) * g + (pc + k), j) += spec.patch_amplitude * patch(i * p + k, j);
  return t;
}

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

Tensor stack_tokens(const std::vector<Sample>& samples, const SyntheticSpec& spec) {
  const std::size_t n = spec.grid * spec.grid;
  Tensor out({samples.size(), n, spec.token_dim});
  std::size_t off = 0;
  for (const auto& s : samples) {
    std::copy(s.tokens.data().begin(), s.tokens.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += s.tokens.size();
  }
  return out;
}

Tensor stack_labels(const std::vector<Sample>& samples) {
  Tensor out({samples.size(), 4});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out(i, 0) = samples[i].coarse;
    out(i, 1) = samples[i].fine;
    out(i, 2) = static_cast<double>(samples[i].patch_row);
    out(i, 3) = static_cast<double>(samples[i].patch_col);
  }
  return out;
}

std::vector<Sample> unstack(const Tensor& tokens, const Tensor& labels, std::size_t fine_per_coarse) {
  std::vector<Sample> out;
  if (tokens.rank() != 3 || labels.rank() != 2 || labels.shape()[0] != tokens.shape()[0]) {
    throw ValidationError("dataset cache: inconsistent tensor shapes");
  }
  const std::size_t n = tokens.shape()[1], d = tokens.shape()[2];
  for (std::size_t i = 0; i < tokens.shape()[0]; ++i) {
    Sample s;
    std::vector<double> v(tokens.data().begin() + static_cast<std::ptrdiff_t>(i * n * d),
                          tokens.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n * d));
    s.tokens = Tensor({n, d}, std::move(v));
    s.coarse = static_cast<int>(labels(i, 0));
    s.fine = static_cast<int>(labels(i, 1));
    s.label = s.coarse * static_cast<int>(fine_per_coarse) + s.fine;
    s.patch_row = static_cast<std::size_t>(labels(i, 2));
    s.patch_col = static_cast<std::size_t>(labels(i, 3));
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json spec_json(const SyntheticSpec& s) {
  return {{"num_coarse", s.num_coarse},
          {"fine_per_coarse", s.fine_per_coarse},
          {"grid", s.grid},
          {"token_dim", s.token_dim},
          {"signal_patch_size", s.signal_patch_size},
          {"noise_std", s.noise_std},
          {"coarse_amplitude", s.coarse_amplitude},
          {"patch_amplitude", s.patch_amplitude},
          {"samples_per_class", s.samples_per_class},
          {"test_samples_per_class", s.test_samples_per_class}};
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_coarse == 0 || fine_per_coarse == 0) throw ConfigError("dataset needs at least one class");
  if (grid == 0 || token_dim == 0) throw ConfigError("dataset grid and token_dim must be positive");
  if (signal_patch_size == 0) throw ConfigError("signal_patch_size must be positive");
  if (signal_patch_size > grid) {
    throw ConfigError("signal_patch_size " + std::to_string(signal_patch_size) +
                      " exceeds grid " + std::to_string(grid));
  }
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
}

Tensor class_template(const SyntheticSpec& spec, int label, std::size_t patch_row,
                      std::size_t patch_col) {
  spec.validate();
  if (label < 0 || static_cast<std::size_t>(label) >= spec.num_classes()) {
    throw ValidationError("class_template: label out of range");
  }
  return render(spec, make_motifs(spec), label, patch_row, patch_col);
}

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const Motifs motifs = make_motifs(spec);
  std::mt19937_64 rng(derive_seed(spec.seed, "dataset/samples"));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> where(0, spec.grid - spec.signal_patch_size);

  auto draw = [&](std::size_t per_class, std::vector<Sample>& out) {
    for (std::size_t k = 0; k < spec.num_classes(); ++k) {
      for (std::size_t i = 0; i < per_class; ++i) {
        Sample s;
        s.label = static_cast<int>(k);
        s.coarse = static_cast<int>(k / spec.fine_per_coarse);
        s.fine = static_cast<int>(k % spec.fine_per_coarse);
        s.patch_row = where(rng);
        s.patch_col = where(rng);
        s.tokens = render(spec, motifs, s.label, s.patch_row, s.patch_col);
        for (double& v : s.tokens.data()) v += spec.noise_std * noise(rng);
        out.push_back(std::move(s));
      }
    }
  };
  Dataset data;
  draw(spec.samples_per_class, data.train);
  draw(spec.test_samples_per_class, data.test);
  return data;
}

std::uint64_t dataset_checksum(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* split : {&data.train, &data.test}) {
    for (const auto& s : *split) {
      std::ostringstream os;
      write_binary(os, s.tokens);
      const std::string bytes = os.str();
      fnv(h, bytes.data(), bytes.size());
      const std::int64_t meta[] = {s.coarse, s.fine, s.label, static_cast<std::int64_t>(s.patch_row),
                                   static_cast<std::int64_t>(s.patch_col)};
      fnv(h, meta, sizeof(meta));
    }
  }
  return h;
}

void save_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec, const Dataset& data) {
  std::filesystem::create_directories(dir);
  save_binary(dir / "train.bin", stack_tokens(data.train, spec));
  save_binary(dir / "train_labels.bin", stack_labels(data.train));
  save_binary(dir / "test.bin", stack_tokens(data.test, spec));
  save_binary(dir / "test_labels.bin", stack_labels(data.test));
  nlohmann::json manifest = {{"spec", spec_json(spec)},
                             {"seed", spec.seed},
                             {"checksum", dataset_checksum(data)}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ValidationError("dataset cache: missing manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(is);
  const std::size_t fine = manifest.at("spec").at("fine_per_coarse").get<std::size_t>();
  Dataset data;
  data.train = unstack(load_binary(dir / "train.bin"), load_binary(dir / "train_labels.bin"), fine);
  data.test = unstack(load_binary(dir / "test.bin"), load_binary(dir / "test_labels.bin"), fine);
  if (dataset_checksum(data) != manifest.at("checksum").get<std::uint64_t>()) {
    throw ValidationError("dataset cache: checksum mismatch in " + dir.string());
  }
  return data;
}

}  // namespace hgcl::harness
