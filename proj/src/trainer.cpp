// SPDX-License-Identifier: Apache-2.0
#include "retro/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <nlohmann/json.hpp>

#include "retro/decode.hpp"
#include "retro/error.hpp"
#include "retro/io.hpp"
#include "retro/nn/model.hpp"
#include "retro/parallel.hpp"
#include "retro/random.hpp"

namespace retro::train {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Single: return "single";
    case Strategy::Joint: return "joint";
    case Strategy::Self: return "self";
    case Strategy::Pretrain: return "pretrain";
    case Strategy::Finetune: return "finetune";
  }
  return "single";
}

Strategy strategy_from_string(const std::string& s) {
  for (Strategy k : {Strategy::Single, Strategy::Joint, Strategy::Self, Strategy::Pretrain, Strategy::Finetune}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::Config, "unknown strategy '" + s + "' (expected single, joint, self, pretrain or finetune)");
}

// --- run config ---------------------------------------------------------------

namespace {

std::string number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class U>
U parse_number(const std::string& key, const std::string& text) {
  U value{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), value);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw Error(ErrorKind::Config, "bad value '" + text + "' for " + key);
  }
  return value;
}

struct Field {
  const char* key;
  std::function<std::string(const TrainRunConfig&)> get;
  std::function<void(TrainRunConfig&, const std::string&)> set;
};

template <class U>
Field numeric(const char* key, U TrainRunConfig::*member) {
  return {key,
          [member](const TrainRunConfig& c) {
            if constexpr (std::is_floating_point_v<U>) {
              return number(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          },
          [member, key](TrainRunConfig& c, const std::string& v) { c.*member = parse_number<U>(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      {"strategy", [](const TrainRunConfig& c) { return to_string(c.strategy); },
       [](TrainRunConfig& c, const std::string& v) { c.strategy = strategy_from_string(v); }},
      numeric("num_layers", &TrainRunConfig::num_layers),
      numeric("model_dim", &TrainRunConfig::model_dim),
      numeric("num_heads", &TrainRunConfig::num_heads),
      numeric("ffn_dim", &TrainRunConfig::ffn_dim),
      numeric("max_seq_len", &TrainRunConfig::max_seq_len),
      numeric("dropout", &TrainRunConfig::dropout),
      numeric("label_smoothing", &TrainRunConfig::label_smoothing),
      numeric("iterations", &TrainRunConfig::iterations),
      numeric("batch_tokens", &TrainRunConfig::batch_tokens),
      numeric("val_interval", &TrainRunConfig::val_interval),
      {"schedule", [](const TrainRunConfig& c) { return optim::to_string(c.schedule); },
       [](TrainRunConfig& c, const std::string& v) { c.schedule = optim::schedule_kind_from_string(v); }},
      numeric("peak_lr", &TrainRunConfig::peak_lr),
      numeric("min_lr", &TrainRunConfig::min_lr),
      numeric("warmup", &TrainRunConfig::warmup),
      numeric("period", &TrainRunConfig::period),
      numeric("clip_norm", &TrainRunConfig::clip_norm),
      numeric("seed", &TrainRunConfig::seed),
      numeric("test_interval", &TrainRunConfig::test_interval),
      numeric("test_samples", &TrainRunConfig::test_samples),
      numeric("test_beam", &TrainRunConfig::test_beam),
      {"checkpoint_dir", [](const TrainRunConfig& c) { return c.checkpoint_dir.string(); },
       [](TrainRunConfig& c, const std::string& v) { c.checkpoint_dir = v; }},
      {"init_checkpoint", [](const TrainRunConfig& c) { return c.init_checkpoint.string(); },
       [](TrainRunConfig& c, const std::string& v) { c.init_checkpoint = v; }},
  };
  return kFields;
}

}  // namespace

nn::ModelConfig TrainRunConfig::model(int vocab_size) const {
  return {vocab_size, num_layers, model_dim, num_heads, ffn_dim, max_seq_len, dropout, 1e-5};
}

optim::Schedule TrainRunConfig::make_schedule() const {
  const auto kind = strategy == Strategy::Finetune ? optim::ScheduleKind::InverseSqrt : schedule;
  optim::Schedule s = optim::Schedule::for_iterations(kind, iterations);
  s.peak_lr = peak_lr;
  s.min_lr = min_lr;
  if (warmup > 0) s.warmup = warmup;
  if (period > 0) s.period = period;
  return s;
}

void TrainRunConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  model(5).validate();
  make_schedule().validate();
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) bad("label_smoothing must be in [0, 1)");
  if (val_interval < 1) bad("val_interval must be at least 1");
  if (iterations < val_interval) bad("iterations must be at least val_interval");
  if (batch_tokens < 1) bad("batch_tokens must be positive");
  if (test_interval > 0) {
    if (test_interval % val_interval != 0) bad("test_interval must be a multiple of val_interval");
    if (test_beam < 20) bad("test_beam must be at least 20");
    if (test_samples < 1) bad("test_samples must be positive");
  }
  if (strategy == Strategy::Finetune && init_checkpoint.empty()) bad("finetune requires init_checkpoint");
}

std::string TrainRunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) {
    const std::string v = f.get(*this);
    if (v.empty()) continue;
    out += std::string(f.key) + " = " + v + "\n";
  }
  return out;
}

TrainRunConfig TrainRunConfig::parse(std::string_view text) {
  TrainRunConfig c;
  for (const auto& [key, value] : io::parse_key_values(text)) {
    bool known = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(c, value);
        known = true;
        break;
      }
    }
    if (!known) throw Error(ErrorKind::Config, "unknown run-config key '" + key + "'");
  }
  return c;
}

TrainRunConfig TrainRunConfig::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

// --- ledger and curves --------------------------------------------------------

bool SnapshotLedger::record(std::uint64_t iteration, double perplexity, std::string checkpoint) {
  if (!entries.empty() && iteration <= entries.back().iteration) {
    throw Error(ErrorKind::Config, "snapshot iterations must increase");
  }
  entries.push_back({iteration, perplexity, std::move(checkpoint)});
  if (!best || perplexity < entries[*best].perplexity) {
    best = entries.size() - 1;
    return true;
  }
  return false;
}

const SnapshotEntry& SnapshotLedger::best_entry() const {
  if (!best) throw Error(ErrorKind::EmptyDataset, "ledger has no snapshots");
  return entries[*best];
}

std::string SnapshotLedger::to_text() const {
  std::string out = "iteration\tperplexity\tcheckpoint\n";
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.6f", e.perplexity);
    out += std::to_string(e.iteration) + "\t" + buf + "\t" + (e.checkpoint.empty() ? "-" : e.checkpoint) + "\n";
  }
  if (best) out += "best\t" + std::to_string(entries[*best].iteration) + "\n";
  return out;
}

std::string SnapshotLedger::to_json() const {
  nlohmann::json j;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"iteration", e.iteration}, {"perplexity", e.perplexity}, {"checkpoint", e.checkpoint}});
  }
  j["best_index"] = best ? nlohmann::json(*best) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

void CurveLog::add(CurveRow row) {
  if (!rows.empty() && row.iteration <= rows.back().iteration) {
    throw Error(ErrorKind::Config, "curve iterations must strictly increase");
  }
  rows.push_back(row);
}

bool CurveLog::has_test_columns() const {
  for (const auto& r : rows) {
    if (r.acc1 || r.acc20) return true;
  }
  return false;
}

std::string CurveLog::to_csv() const {
  const bool test = has_test_columns();
  std::string out = test ? "iter,train_ppl,lr,acc1,acc20\n" : "iter,train_ppl,lr\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.6f,%.8g", static_cast<unsigned long long>(r.iteration), r.train_ppl, r.lr);
    out += buf;
    if (test) {
      for (const auto& a : {r.acc1, r.acc20}) {
        out += ",";
        if (a) {
          std::snprintf(buf, sizeof buf, "%.6f", *a);
          out += buf;
        }
      }
    }
    out += "\n";
  }
  return out;
}

CurveLog CurveLog::parse_csv(std::string_view text) {
  CurveLog log;
  std::size_t start = 0, number = 0;
  std::size_t columns = 0;
  while (start < text.size()) {
    const std::size_t nl = std::min(text.find('\n', start), text.size());
    const std::string line(text.substr(start, nl - start));
    start = nl + 1;
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t from = 0;
    for (;;) {
      const std::size_t comma = line.find(',', from);
      cells.push_back(line.substr(from, comma == std::string::npos ? std::string::npos : comma - from));
      if (comma == std::string::npos) break;
      from = comma + 1;
    }
    if (number == 1) {
      const bool base = cells.size() >= 3 && cells[0] == "iter" && cells[1] == "train_ppl" && cells[2] == "lr";
      const bool full = cells.size() == 5 && cells[3] == "acc1" && cells[4] == "acc20";
      if (!base || (cells.size() != 3 && !full)) throw Error(ErrorKind::Format, "unexpected curves header");
      columns = cells.size();
      continue;
    }
    if (cells.size() != columns) throw Error(ErrorKind::Format, "curves line " + std::to_string(number) + ": wrong column count");
    CurveRow r;
    r.iteration = parse_number<std::uint64_t>("iter", cells[0]);
    r.train_ppl = parse_number<double>("train_ppl", cells[1]);
    r.lr = parse_number<double>("lr", cells[2]);
    if (columns == 5) {
      if (!cells[3].empty()) r.acc1 = parse_number<double>("acc1", cells[3]);
      if (!cells[4].empty()) r.acc20 = parse_number<double>("acc20", cells[4]);
    }
    log.add(r);
  }
  if (number == 0) throw Error(ErrorKind::Format, "empty curves file");
  return log;
}

// --- training loop ------------------------------------------------------------

namespace {

enum class Origin { Target, Augment, Pseudo };

struct Tagged {
  const data::ReactionSample* sample;
  Origin origin;
};

void count(DataAudit& audit, Origin o, std::size_t n) {
  switch (o) {
    case Origin::Target: audit.target += n; break;
    case Origin::Augment: audit.augment += n; break;
    case Origin::Pseudo: audit.pseudo += n; break;
  }
}

nn::SequencePair encode_pair(const nn::Vocabulary& vocab, const data::ReactionSample& s, int max_seq_len) {
  nn::SequencePair p{vocab.encode(s.product), vocab.encode(s.reactants)};
  const auto limit = static_cast<std::size_t>(max_seq_len);
  if (p.src.size() > limit || p.tgt.size() + 1 > limit) {
    throw Error(ErrorKind::SequenceTooLong, "sample " + s.product + ">>" + s.reactants + " exceeds max_seq_len " +
                                                std::to_string(max_seq_len));
  }
  return p;
}

std::vector<nn::SequencePair> encode_all(const nn::Vocabulary& vocab, const std::vector<data::ReactionSample>& samples,
                                         int max_seq_len) {
  std::vector<nn::SequencePair> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_pair(vocab, s, max_seq_len));
  return out;
}

double perplexity_of(const nn::ParameterSet<Real>& params, const nn::ModelConfig& cfg,
                     const std::vector<nn::SequencePair>& pairs) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");
  return nn::loss_and_grad<Real>(params, cfg, pairs, nullptr).perplexity();
}

/// Length-sorted batches under a token budget, in seed-shuffled order.
/// Samples of equal length are shuffled per epoch before sorting.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<nn::SequencePair>& data, std::size_t budget,
                                                   std::uint64_t seed, std::uint64_t epoch) {
  Rng rng(mix_seed(seed, epoch, 0x6261746368));
  auto cost = [&](std::size_t i) { return data[i].src.size() + data[i].tgt.size() + 1; };
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cost(a) < cost(b); });
  std::vector<std::vector<std::size_t>> batches;
  std::size_t used = 0;
  for (std::size_t i : order) {
    if (batches.empty() || used + cost(i) > budget) {
      batches.emplace_back();
      used = 0;
    }
    batches.back().push_back(i);
    used += cost(i);
  }
  rng.shuffle(std::span(batches));
  return batches;
}

std::pair<double, double> test_accuracy(const nn::ParameterSet<Real>& params, const nn::ModelConfig& cfg,
                                        const nn::Vocabulary& vocab, const std::vector<data::ReactionSample>& test,
                                        int beam) {
  std::vector<std::string> products;
  for (const auto& s : test) products.push_back(s.product);
  const auto beams = decode::decode_products(params, cfg, vocab, products, beam, cfg.max_seq_len);
  std::vector<std::optional<int>> ranks;
  for (std::size_t i = 0; i < test.size(); ++i) ranks.push_back(decode::gold_rank(beams[i], test[i]));
  const auto table = decode::accuracy_from_ranks(ranks, {1, 20});
  return {table.at(1), table.at(20)};
}

std::string snapshot_name(std::uint64_t iteration) { return "snapshot_" + std::to_string(iteration) + ".ckpt"; }

TrainResult run(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, nn::ParameterSet<Real> params,
                const std::vector<Tagged>& train, const std::vector<data::ReactionSample>& val, Origin val_origin,
                const std::vector<data::ReactionSample>& test, Origin test_origin, const TrainHooks& hooks) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  if (val.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");
  TrainResult result;
  result.model = cfg.model(vocab.size());
  result.vocab = vocab;
  result.train_size = train.size();
  const nn::ModelConfig& mcfg = result.model;
  const optim::Schedule schedule = cfg.make_schedule();

  std::vector<nn::SequencePair> pairs;
  pairs.reserve(train.size());
  for (const Tagged& t : train) {
    pairs.push_back(encode_pair(vocab, *t.sample, mcfg.max_seq_len));
    count(result.audit, t.origin, 1);
  }
  const auto val_pairs = encode_all(vocab, val, mcfg.max_seq_len);
  count(result.audit, val_origin, val.size());
  std::vector<data::ReactionSample> test_subset;
  if (cfg.test_interval > 0) {
    if (test.empty()) throw Error(ErrorKind::EmptyDataset, "test evaluation requested but the test set is empty");
    test_subset.assign(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.test_samples, test.size())));
    count(result.audit, test_origin, test_subset.size());
  }

  const std::filesystem::path& dir = cfg.checkpoint_dir;
  if (!dir.empty()) io::write_file_atomic(dir / "run.cfg", cfg.to_text());

  auto adam = optim::AdamState<Real>::fresh(params);
  nn::ParameterSet<Real> grad;
  if (hooks.on_start) hooks.on_start(params);
  result.best = params;

  std::vector<std::vector<std::size_t>> batches;
  std::size_t next_batch = 0;
  std::uint64_t epoch = 0;
  double interval_nll = 0.0;
  std::size_t interval_tokens = 0;
  std::vector<nn::SequencePair> batch;
  for (std::uint64_t iter = 0; iter < cfg.iterations; ++iter) {
    if (next_batch == batches.size()) {
      batches = make_batches(pairs, cfg.batch_tokens, cfg.seed, epoch++);
      next_batch = 0;
    }
    batch.clear();
    for (std::size_t i : batches[next_batch++]) batch.push_back(pairs[i]);
    const nn::LossOptions opts{.training = mcfg.dropout_rate > 0.0,
                               .dropout_seed = mix_seed(cfg.seed, iter, 0x647270),
                               .label_smoothing = cfg.label_smoothing};
    const nn::LossValue loss = nn::loss_and_grad<Real>(params, mcfg, batch, &grad, opts);
    const Real inv = Real(1) / static_cast<Real>(loss.tokens);
    for (auto& g : grad.tensors) g *= inv;
    optim::clip_global_norm(grad, cfg.clip_norm);
    const double lr = schedule.at(iter);
    optim::adam_step(params, grad, adam, lr);
    interval_nll += loss.total;
    interval_tokens += loss.tokens;

    const std::uint64_t done = iter + 1;
    if (done % cfg.val_interval != 0) continue;
    const double ppl = perplexity_of(params, mcfg, val_pairs);
    CurveRow row{done, std::exp(interval_nll / static_cast<double>(interval_tokens)), lr, std::nullopt, std::nullopt};
    interval_nll = 0.0;
    interval_tokens = 0;
    if (cfg.test_interval > 0 && done % cfg.test_interval == 0) {
      const auto [a1, a20] = test_accuracy(params, mcfg, vocab, test_subset, cfg.test_beam);
      row.acc1 = a1;
      row.acc20 = a20;
    }
    const bool improves = !result.ledger.best || ppl < result.ledger.best_entry().perplexity;
    std::string path;
    if (improves) {
      result.best = params;
      if (!dir.empty()) {
        path = snapshot_name(done);
        nn::save_checkpoint(dir / path, params, mcfg, vocab);
      }
    }
    result.ledger.record(done, ppl, path);
    result.curves.add(row);
    if (hooks.on_validation) hooks.on_validation(result.ledger.entries.back(), row);
  }
  result.last = std::move(params);
  if (!dir.empty()) {
    nn::save_checkpoint(dir / "best.ckpt", result.best, mcfg, vocab);
    io::write_file_atomic(dir / "ledger.txt", result.ledger.to_text());
    io::write_file_atomic(dir / "ledger.json", result.ledger.to_json());
    io::write_file_atomic(dir / "curves.csv", result.curves.to_csv());
  }
  return result;
}

std::vector<Tagged> tag(const std::vector<data::ReactionSample>& samples, Origin o) {
  std::vector<Tagged> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({&s, o});
  return out;
}

void require_strategy(const TrainRunConfig& cfg, Strategy s) {
  if (cfg.strategy != s) {
    throw Error(ErrorKind::Config, "run config strategy is " + to_string(cfg.strategy) + ", expected " + to_string(s));
  }
}

void require_no_leak(const std::vector<data::ReactionSample>& extra, const data::DatasetSplit& target) {
  const auto hits = data::product_overlap(extra, target);
  if (!hits.empty()) {
    throw Error(ErrorKind::LeakDetected, std::to_string(hits.size()) + " training products also occur in the target "
                                             "dataset, first: " + hits.front());
  }
}

}  // namespace

nn::Vocabulary build_vocabulary(const std::vector<data::ReactionSample>& a, const std::vector<data::ReactionSample>& b) {
  std::vector<std::string> texts;
  for (const auto* part : {&a, &b}) {
    for (const auto& s : *part) {
      texts.push_back(s.product);
      texts.push_back(s.reactants);
    }
  }
  return nn::Vocabulary::build(texts);
}

TrainResult train_single(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& target,
                         const TrainHooks& hooks) {
  require_strategy(cfg, Strategy::Single);
  auto params = nn::init_params<Real>(cfg.model(vocab.size()), cfg.seed);
  return run(cfg, vocab, std::move(params), tag(target.train, Origin::Target), target.val, Origin::Target, target.test,
             Origin::Target, hooks);
}

TrainResult train_joint(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& target,
                        const std::vector<data::ReactionSample>& augment_train, const TrainHooks& hooks) {
  require_strategy(cfg, Strategy::Joint);
  require_no_leak(augment_train, target);
  auto train = tag(target.train, Origin::Target);
  const auto extra = tag(augment_train, Origin::Augment);
  train.insert(train.end(), extra.begin(), extra.end());
  auto params = nn::init_params<Real>(cfg.model(vocab.size()), cfg.seed);
  return run(cfg, vocab, std::move(params), train, target.val, Origin::Target, target.test, Origin::Target, hooks);
}

TrainResult train_self(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& target,
                       const std::vector<data::ReactionSample>& pseudo_train, const TrainHooks& hooks) {
  require_strategy(cfg, Strategy::Self);
  require_no_leak(pseudo_train, target);
  auto train = tag(target.train, Origin::Target);
  const auto extra = tag(pseudo_train, Origin::Pseudo);
  train.insert(train.end(), extra.begin(), extra.end());
  auto params = nn::init_params<Real>(cfg.model(vocab.size()), cfg.seed);
  return run(cfg, vocab, std::move(params), train, target.val, Origin::Target, target.test, Origin::Target, hooks);
}

TrainResult pretrain(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& augment,
                     const TrainHooks& hooks) {
  require_strategy(cfg, Strategy::Pretrain);
  auto params = nn::init_params<Real>(cfg.model(vocab.size()), cfg.seed);
  return run(cfg, vocab, std::move(params), tag(augment.train, Origin::Augment), augment.val, Origin::Augment,
             augment.test, Origin::Augment, hooks);
}

TrainResult finetune(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const nn::Checkpoint<Real>& init,
                     const data::DatasetSplit& target, const TrainHooks& hooks) {
  require_strategy(cfg, Strategy::Finetune);
  nn::require_compatible(init.config, init.vocab, cfg.model(vocab.size()), vocab);
  return run(cfg, vocab, init.params, tag(target.train, Origin::Target), target.val, Origin::Target, target.test,
             Origin::Target, hooks);
}

std::vector<PseudoLabel> pseudo_label(const nn::ParameterSet<Real>& params, const nn::ModelConfig& cfg,
                                      const nn::Vocabulary& vocab, const std::vector<std::string>& products) {
  std::vector<PseudoLabel> out(products.size());
  parallel_for(products.size(), [&](std::size_t i) {
    const auto src = vocab.encode(products[i]);
    if (src.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
      throw Error(ErrorKind::SequenceTooLong, "product " + products[i] + " exceeds max_seq_len");
    }
    // a truncated output still fits as a training target once EOS is appended
    const auto beam = decode::beam_search(params, cfg, src, 1, cfg.max_seq_len - 1);
    const decode::Candidate& best = beam.candidates.front();
    out[i].sample = {products[i], vocab.decode(best.tokens), std::nullopt};
    out[i].truncated = best.truncated;
  });
  return out;
}

std::string format_pseudo(const std::vector<PseudoLabel>& labels) {
  std::string out;
  for (const auto& l : labels) {
    out += l.sample.product + "\t" + l.sample.reactants + (l.truncated ? "\ttruncated" : "") + "\n";
  }
  return out;
}

std::vector<PseudoLabel> parse_pseudo(std::string_view text) {
  std::vector<PseudoLabel> out;
  std::size_t start = 0, number = 0;
  while (start < text.size()) {
    const std::size_t nl = std::min(text.find('\n', start), text.size());
    const std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++number;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw Error(ErrorKind::Format, "pseudo-label line " + std::to_string(number) + ": expected product<TAB>reactants");
    }
    PseudoLabel l;
    l.sample.product = std::string(line.substr(0, tab));
    std::string_view rest = line.substr(tab + 1);
    const std::size_t flag = rest.find('\t');
    if (flag != std::string_view::npos) {
      if (rest.substr(flag + 1) != "truncated") {
        throw Error(ErrorKind::Format, "pseudo-label line " + std::to_string(number) + ": unknown flag");
      }
      l.truncated = true;
      rest = rest.substr(0, flag);
    }
    l.sample.reactants = std::string(rest);
    out.push_back(std::move(l));
  }
  return out;
}

double validate_perplexity(const nn::ParameterSet<Real>& params, const nn::ModelConfig& cfg,
                           const nn::Vocabulary& vocab, const std::vector<data::ReactionSample>& samples) {
  return perplexity_of(params, cfg, encode_all(vocab, samples, cfg.max_seq_len));
}

}  // namespace retro::train
