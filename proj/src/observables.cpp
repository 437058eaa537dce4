#include "nah/observables.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "nah/io.hpp"
#include "nah/units.hpp"

namespace nah {

double estimate_anion_population(const MappedState& s, double gamma) {
  return 0.5 * (s.x[0] * s.x[0] + s.p[0] * s.p[0] - gamma);
}

double estimate_metal_population(const MappedState& s, int k, double gamma) {
  return 0.5 * (s.x[k] * s.x[k] + s.p[k] * s.p[k] - gamma);
}

double estimate_vib_population(double R, double P_R, const WignerTable& table) {
  return units::two_pi * table.value(R, P_R);
}

std::string SeriesLayout::name(int series) const {
  if (series == bond_length) return "bond_length";
  if (series == surface_distance) return "surface_distance";
  if (series == anion) return "anion_population";
  if (series < vib(0)) return "metal_population_" + std::to_string(series - 2);
  return "vib_population_" + std::to_string(series - vib(0));
}

TrajectoryObservables::TrajectoryObservables(const SeriesLayout& layout, long n_records,
                                             const std::vector<WignerTable>* tables, double gamma)
    : layout_(layout),
      n_records_(n_records),
      tables_(tables),
      gamma_(gamma),
      values_(static_cast<std::size_t>(n_records) * layout.size(), 0.0),
      leaked_(n_records, 0),
      finals_(layout.n_vib, 0.0) {
  if (!tables_ || static_cast<int>(tables_->size()) != layout.n_vib)
    throw Error("one Wigner table per vibrational level is required");
}

void TrajectoryObservables::record(long index, const MappedState& s) {
  if (index < 0 || index >= n_records_) throw Error("record index out of range");
  double* row = values_.data() + static_cast<std::size_t>(index) * layout_.size();
  row[SeriesLayout::bond_length] = s.R;
  row[SeriesLayout::surface_distance] = s.Z;
  row[SeriesLayout::anion] = estimate_anion_population(s, gamma_);
  for (int k = 1; k <= layout_.n_states; ++k)
    row[layout_.metal(k)] = estimate_metal_population(s, k, gamma_);
  bool inside = false;
  for (int nu = 0; nu < layout_.n_vib; ++nu) {
    const auto& t = (*tables_)[nu];
    row[layout_.vib(nu)] = estimate_vib_population(s.R, s.P_R, t);
    inside = inside || t.contains(s.R, s.P_R);
  }
  leaked_[index] = inside ? 0 : 1;
  recorded_ = std::max(recorded_, index + 1);

  double norm = 0.0;
  for (int k = 0; k < s.dimension(); ++k) norm += s.x[k] * s.x[k] + s.p[k] * s.p[k];
  const double n_e = electron_count(s, gamma_);
  if (index == 0) {
    norm0_ = norm;
    n_e0_ = n_e;
  }
  max_norm_drift_ = std::max(max_norm_drift_, std::abs(norm - norm0_));
  max_electron_drift_ = std::max(max_electron_drift_, std::abs(n_e - n_e0_));
}

void TrajectoryObservables::finalize(std::optional<long> exit_record, double fraction) {
  const long begin = exit_record ? std::min(*exit_record, recorded_ - 1) : 0;
  const long count = recorded_ - begin;
  const long width = std::max(1L, static_cast<long>(std::ceil(fraction * count)));
  const long start = recorded_ - width;
  std::fill(finals_.begin(), finals_.end(), 0.0);
  double leak = 0.0;
  for (long r = start; r < recorded_; ++r) {
    for (int nu = 0; nu < layout_.n_vib; ++nu) finals_[nu] += value(r, layout_.vib(nu));
    leak += leaked_[r];
  }
  for (double& f : finals_) f /= width;
  final_leak_ = leak / width;
}

EnsembleAccumulator::EnsembleAccumulator(const SeriesLayout& layout, long n_records,
                                         double record_dt)
    : layout_(layout), n_records_(n_records), record_dt_(record_dt) {
  const auto cells = static_cast<std::size_t>(n_records) * layout.size();
  s1_.assign(cells, 0.0);
  s2_.assign(cells, 0.0);
  s3_.assign(cells, 0.0);
  f1_.assign(layout.n_vib, 0.0);
  f2_.assign(layout.n_vib, 0.0);
  f3_.assign(layout.n_vib, 0.0);
}

void EnsembleAccumulator::add(const TrajectoryObservables& obs, double weight,
                              const TrajectoryRecord& rec) {
  if (obs.recorded() != n_records_) throw Error("trajectory observables are incomplete");
  const double w = weight;
  const double ww = w * w;
  w1_ += w;
  w2_ += ww;
  const auto cols = static_cast<std::size_t>(layout_.size());
  for (long r = 0; r < n_records_; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double b = obs.value(r, static_cast<int>(c));
      s1_[base + c] += w * b;
      s2_[base + c] += ww * b;
      s3_[base + c] += ww * b * b;
    }
  }
  for (int nu = 0; nu < layout_.n_vib; ++nu) {
    const double f = obs.finals()[nu];
    f1_[nu] += w * f;
    f2_[nu] += ww * f;
    f3_[nu] += ww * f * f;
  }
  leak_ += w * obs.final_leak();

  ++stats_.n_trajectories;
  ++stats_.n_used;
  ++stats_.n_within_energy_tol;
  stats_.weight_sum += w;
  stats_.abs_weight_sum += std::abs(w);
  stats_.max_energy_drift = std::max(stats_.max_energy_drift, rec.max_energy_drift);
  stats_.max_electron_drift = std::max(stats_.max_electron_drift, obs.max_electron_drift());
  stats_.max_norm_drift = std::max(stats_.max_norm_drift, obs.max_norm_drift());
}

void EnsembleAccumulator::add_discarded(const TrajectoryRecord& rec) {
  ++stats_.n_trajectories;
  if (rec.discard_reason == DiscardReason::energy) {
    ++stats_.n_discarded_energy;
  } else {
    ++stats_.n_discarded_bond;
    ++stats_.n_within_energy_tol;
  }
}

void EnsembleAccumulator::add_failed() {
  ++stats_.n_trajectories;
  ++stats_.n_failed;
}

namespace {

class Writer {
 public:
  template <class T>
  void put(const T& v) {
    const auto* b = reinterpret_cast<const char*>(&v);
    out.append(b, sizeof(T));
  }
  void put(const std::vector<double>& v) {
    put(static_cast<std::uint64_t>(v.size()));
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::string out;
};

class Reader {
 public:
  explicit Reader(const std::string& s) : in(s) {}
  template <class T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::vector<double> vec() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), in.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    return v;
  }
  void need(std::size_t n) const {
    if (pos + n > in.size()) throw Error("truncated accumulator checkpoint");
  }
  const std::string& in;
  std::size_t pos = 0;
};

constexpr std::uint64_t accumulator_magic = 0x4e41484143430001ULL;

double variance_of_ratio(double s1, double s2, double s3, double w1, double w2) {
  const double m = s1 / w1;
  return std::max(0.0, (s3 - 2.0 * m * s2 + m * m * w2) / (w1 * w1));
}

}  // namespace

std::string EnsembleAccumulator::serialize() const {
  Writer w;
  w.put(accumulator_magic);
  w.put(static_cast<std::int32_t>(layout_.n_states));
  w.put(static_cast<std::int32_t>(layout_.n_vib));
  w.put(static_cast<std::int64_t>(n_records_));
  w.put(record_dt_);
  w.put(w1_);
  w.put(w2_);
  w.put(s1_);
  w.put(s2_);
  w.put(s3_);
  w.put(f1_);
  w.put(f2_);
  w.put(f3_);
  w.put(leak_);
  const auto& s = stats_;
  for (long v : {s.n_trajectories, s.n_used, s.n_discarded_energy, s.n_discarded_bond, s.n_failed,
                 s.n_within_energy_tol})
    w.put(static_cast<std::int64_t>(v));
  for (double v : {s.weight_sum, s.abs_weight_sum, s.max_energy_drift, s.max_electron_drift,
                   s.max_norm_drift})
    w.put(v);
  return w.out;
}

EnsembleAccumulator EnsembleAccumulator::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.get<std::uint64_t>() != accumulator_magic) throw Error("not an accumulator checkpoint");
  SeriesLayout layout;
  layout.n_states = r.get<std::int32_t>();
  layout.n_vib = r.get<std::int32_t>();
  const auto n_records = static_cast<long>(r.get<std::int64_t>());
  const double record_dt = r.get<double>();
  EnsembleAccumulator a(layout, n_records, record_dt);
  a.w1_ = r.get<double>();
  a.w2_ = r.get<double>();
  a.s1_ = r.vec();
  a.s2_ = r.vec();
  a.s3_ = r.vec();
  a.f1_ = r.vec();
  a.f2_ = r.vec();
  a.f3_ = r.vec();
  a.leak_ = r.get<double>();
  auto& s = a.stats_;
  for (long* v : {&s.n_trajectories, &s.n_used, &s.n_discarded_energy, &s.n_discarded_bond,
                  &s.n_failed, &s.n_within_energy_tol})
    *v = static_cast<long>(r.get<std::int64_t>());
  for (double* v : {&s.weight_sum, &s.abs_weight_sum, &s.max_energy_drift, &s.max_electron_drift,
                    &s.max_norm_drift})
    *v = r.get<double>();
  const auto cells = static_cast<std::size_t>(n_records) * layout.size();
  if (a.s1_.size() != cells || a.s2_.size() != cells || a.s3_.size() != cells ||
      a.f1_.size() != static_cast<std::size_t>(layout.n_vib) || r.pos != bytes.size())
    throw Error("inconsistent accumulator checkpoint");
  return a;
}

long exit_index(const std::vector<double>& z, double z_detect) {
  if (z.empty()) return -1;
  const auto turn = std::min_element(z.begin(), z.end()) - z.begin();
  for (auto i = turn; i < static_cast<long>(z.size()); ++i)
    if (z[i] >= z_detect) return i;
  return -1;
}

double plateau_spread(const std::vector<double>& v, long begin, long end) {
  // Means of equal sub-windows; whole oscillation periods average out
  // inside each block, drift and beating between blocks do not.
  const long n = end - begin;
  const long blocks = std::min<long>(plateau_blocks, n);
  if (blocks < 2) return 0.0;
  std::vector<double> means(blocks, 0.0);
  for (long b = 0; b < blocks; ++b) {
    const long lo = begin + n * b / blocks, hi = begin + n * (b + 1) / blocks;
    for (long r = lo; r < hi; ++r) means[b] += v[r];
    means[b] /= static_cast<double>(hi - lo);
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(blocks);
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  return std::sqrt(var / static_cast<double>(blocks - 1));
}

EnsembleResult EnsembleAccumulator::result(double Z_detect, double plateau_fraction) const {
  if (stats_.n_used == 0) throw Error("all trajectories were discarded or failed");
  if (w1_ == 0.0) throw Error("sign weights cancel exactly; the ensemble average is undefined");
  EnsembleResult out;
  out.layout = layout_;
  out.stats = stats_;

  const int cols = layout_.size();
  out.series.resize(cols);
  for (int c = 0; c < cols; ++c) {
    auto& s = out.series[c];
    s.name = layout_.name(c);
    s.times.resize(n_records_);
    s.values.resize(n_records_);
    s.errors.resize(n_records_);
    for (long r = 0; r < n_records_; ++r) {
      const std::size_t k = static_cast<std::size_t>(r) * cols + c;
      s.times[r] = record_dt_ * static_cast<double>(r);
      s.values[r] = s1_[k] / w1_;
      s.errors[r] = std::sqrt(variance_of_ratio(s1_[k], s2_[k], s3_[k], w1_, w2_));
    }
  }

  out.exit_index = exit_index(out.series[SeriesLayout::surface_distance].values, Z_detect);
  const long begin = out.exit_index >= 0 ? out.exit_index : 0;
  const long width =
      std::max(1L, static_cast<long>(std::ceil(plateau_fraction * (n_records_ - begin))));
  out.plateau_begin = n_records_ - width;
  out.plateau_end = n_records_;

  for (int nu = 0; nu < layout_.n_vib; ++nu) {
    FinalStateRow row;
    row.nu_f = nu;
    row.probability = f1_[nu] / w1_;
    row.ensemble_error = std::sqrt(variance_of_ratio(f1_[nu], f2_[nu], f3_[nu], w1_, w2_));
    row.plateau_spread = plateau_spread(out.series[layout_.vib(nu)].values, out.plateau_begin,
                                        out.plateau_end);
    row.error = std::hypot(row.ensemble_error, row.plateau_spread);
    out.final_states.push_back(row);
  }
  out.stats.leaked_probability = leak_ / w1_;
  return out;
}

std::string series_to_csv(const ObservableSeries& s, bool length_in_angstrom) {
  const double scale = length_in_angstrom ? units::bohr_angstrom : 1.0;
  std::string out = "time_fs,value,stderr\n";
  for (std::size_t i = 0; i < s.times.size(); ++i)
    out += io::format_double(units::to_fs(s.times[i])) + "," + io::format_double(s.values[i] * scale) +
           "," + io::format_double(s.errors[i] * scale) + "\n";
  return out;
}

std::string final_states_to_csv(const std::vector<FinalStateRow>& rows) {
  std::string out = "nu_f,probability,stderr\n";
  for (const auto& r : rows)
    out += std::to_string(r.nu_f) + "," + io::format_double(r.probability) + "," +
           io::format_double(r.error) + "\n";
  return out;
}

}  // namespace nah
