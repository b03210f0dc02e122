// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: acceptance [work_dir] [--only N]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "emomusic/cli/app.hpp"
#include "emomusic/cli/config.hpp"
#include "emomusic/cli/gradcheck_suite.hpp"
#include "emomusic/cli/pipeline.hpp"
#include "emomusic/error.hpp"
#include "emomusic/metrics.hpp"
#include "emomusic/midi_io.hpp"
#include "emomusic/pairing.hpp"
#include "emomusic/tokenizer.hpp"
#include "emomusic/training.hpp"
#include "emomusic/util/io.hpp"
#include "emomusic/util/random.hpp"
#include "support/oracles.hpp"

using namespace emomusic;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kMetricTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kVaAgreeTol = 1e-9;
constexpr double kHeldOutMae = 0.5;
constexpr double kLccDrop = 0.5;
constexpr double kLimit1 = 5, kLimit3 = 10, kLimit4 = 30, kLimit6 = 60, kLimit8 = 600;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 -----------------------------------------------------------------------------
Outcome metric_oracles() {
  const auto t0 = Clock::now();
  util::Rng rng(101);
  double worst = 0;
  std::size_t grooves = 0;
  for (int i = 0; i < 50; ++i) {
    const auto piece = oracle::random_piece(rng, 8);
    const auto roll = midi::to_piano_roll(piece, 4);
    worst = std::max(worst, std::abs(metrics::pitch_entropy(piece) - oracle::entropy_bits(piece)));
    worst = std::max(worst, std::abs(metrics::polyphony_rate(roll) - oracle::polyphony(piece, 4)));
    // a short measure makes most random pieces long enough for groove
    if (const auto g = oracle::groove(piece, 4, 4)) {
      worst = std::max(worst, std::abs(metrics::groove_consistency(roll, 4) - *g));
      ++grooves;
    } else {
      try {
        metrics::groove_consistency(roll, 4);
        return {false, "groove accepted a piece the oracle calls too short"};
      } catch (const Error&) {
      }
    }
  }
  const double s = seconds_since(t0);
  return {worst <= kMetricTol && s < kLimit1 && grooves > 0,
          fmt("50 pieces (%zu with groove), max |diff| %.1e (tol %.0e), %.2f s (limit %.0f s)", grooves, worst,
              kMetricTol, s, kLimit1)};
}

// 2 -----------------------------------------------------------------------------
Outcome hand_values() {
  const midi::MidiPiece p(480, 500000, {{60, 0, 10, 64}, {60, 20, 10, 64}, {64, 0, 10, 64}, {67, 0, 10, 64}});
  const double h = metrics::pitch_entropy(p);
  std::vector<midi::NoteEvent> notes;
  for (int m = 0; m < 4; ++m)
    for (int s : {0, 3, 4, 10}) notes.push_back({60 + s, (16 * m + s) * 120, 120, 80});
  const double g = metrics::groove_consistency(midi::to_piano_roll(midi::MidiPiece(480, 500000, notes), 4), 16);
  const double mql = metrics::music_quality_loss({0.5303, 3.9863, 0.9922});
  return {h == 1.5 && g == 1.0 && mql == 0.0,
          fmt("entropy %.17g (want 1.5), groove %.17g (want 1), loss at reference %.17g (want 0)", h, g, mql)};
}

// 3 -----------------------------------------------------------------------------
Outcome midi_round_trip() {
  const auto t0 = Clock::now();
  util::Rng rng(103);
  int bad = 0;
  for (int i = 0; i < 500; ++i) {
    const auto piece = oracle::random_piece(rng, 24);
    const auto first = midi::write_midi(piece);
    const auto back = midi::parse_midi(first);
    if (!(back == piece) || midi::write_midi(back) != first) ++bad;
  }
  const double s = seconds_since(t0);
  return {bad == 0 && s < kLimit3, fmt("500 pieces, %d mismatches, %.2f s (limit %.0f s)", bad, s, kLimit3)};
}

// 4 -----------------------------------------------------------------------------
Outcome tokenizer_totality() {
  const auto t0 = Clock::now();
  const tok::Vocabulary v;
  util::Rng rng(104);
  int failures = 0, invalid = 0;
  for (int i = 0; i < 10000; ++i) {
    tok::TokenSequence s;
    s.max_len = 256;
    const std::size_t n = rng.index(257);
    // mostly in-vocabulary ids with some out-of-range noise
    for (std::size_t k = 0; k < n; ++k)
      s.ids.push_back(static_cast<tok::TokenId>(rng.index(static_cast<std::size_t>(v.size()) + 40)) - 20);
    try {
      const auto piece = tok::decode(s, v, 4);
      for (const auto& note : piece.notes())
        if (note.pitch < 0 || note.pitch > 127 || note.duration < 1 || note.onset < 0 || note.velocity < 1 ||
            note.velocity > 127)
          ++invalid;
      if (!tok::well_formed(tok::encode(piece, v, 4, 256), v)) ++invalid;
      if (!(midi::parse_midi(midi::write_midi(piece)) == piece)) ++invalid;
    } catch (const std::exception&) {
      ++failures;
    }
  }
  const double s = seconds_since(t0);
  return {failures == 0 && invalid == 0 && s < kLimit4,
          fmt("10000 sequences, %d decode failures, %d invariant violations, %.2f s (limit %.0f s)", failures, invalid,
              s, kLimit4)};
}

// 5 -----------------------------------------------------------------------------
Outcome pairing_oracle() {
  util::Rng rng(105);
  int mismatches = 0;
  for (int round = 0; round < 20; ++round) {
    const bool grid = round % 2 == 1;  // coarse grid forces ties
    const auto midis = oracle::random_catalog(rng, 1 + rng.index(10), "m", pairing::ItemKind::Midi, grid);
    const auto images = oracle::random_catalog(rng, 1 + rng.index(15), "i", pairing::ItemKind::Image, grid);
    const auto got = pairing::pair_datasets(midis, images);
    const auto want = oracle::exhaustive_pairs(midis, images);
    if (got.pairs.size() != want.size()) {
      ++mismatches;
      continue;
    }
    for (std::size_t k = 0; k < want.size(); ++k)
      if (got.pairs[k].midi_id != want[k].midi_id || got.pairs[k].image_id != want[k].image_id) ++mismatches;
  }
  const auto midis = oracle::random_catalog(rng, 3000, "m", pairing::ItemKind::Midi, false);
  const auto images = oracle::random_catalog(rng, 40, "i", pairing::ItemKind::Image, false);
  const auto m = pairing::split(pairing::pair_datasets(midis, images), pairing::kPaperSplit, 7);
  std::size_t n[4] = {0, 0, 0, 0};
  for (const auto& p : m.pairs) ++n[static_cast<int>(p.split)];
  const bool sizes = n[0] == 0 && n[1] == 2884 && n[2] == 100 && n[3] == 16;
  return {mismatches == 0 && sizes,
          fmt("20 catalogs, %d mismatches vs exhaustive search; split of 3000 gave %zu/%zu/%zu", mismatches, n[1], n[2],
              n[3])};
}

// 6 -----------------------------------------------------------------------------
Outcome gradient_checks() {
  const auto t0 = Clock::now();
  const auto report = cli::run_gradcheck_suite(cli::reduced_model_config(), 106, kGradTol);
  const double s = seconds_since(t0);
  std::string names;
  for (const auto& e : report.entries) names += (names.empty() ? "" : ",") + e.component;
  return {report.passed() && s < kLimit6,
          fmt("%zu components, max rel error %.2e (tol %.0e), %.1f s (limit %.0f s)", report.entries.size(),
              report.max_rel_error(), kGradTol, s, kLimit6) +
              " [" + names + "]"};
}

// Shared desk data for 7, 8 and 10.
struct Desk {
  fs::path dir;
  cli::RunConfig config;
  std::vector<training::TrainingExample> examples;
  std::unique_ptr<model::VaPredictor> predictor;
};

Desk prepare_desk(const fs::path& dir) {
  fs::remove_all(dir);
  std::ostringstream out, err;
  if (cli::run({"make-desk-data", "--out-dir", dir.string(), "--count", "16", "--seed", "0"}, out, err) != 0)
    throw std::runtime_error("make-desk-data failed: " + err.str());
  const auto cfg = (dir / "config.json").string();
  if (cli::run({"pretrain-va", "--midis", (dir / "midis.csv").string(), "--out", (dir / "predictor.ckpt").string(),
                "--config", cfg},
               out, err) != 0)
    throw std::runtime_error("pretrain-va failed: " + err.str());
  Desk d;
  d.dir = dir;
  d.config = cli::RunConfig::load(dir / "config.json");
  d.examples = cli::training_examples(d.config, pairing::load_manifest(d.config.data.manifest));
  d.predictor = cli::load_predictor(d.config.data.predictor);
  return d;
}

bool same_parameters(model::EmoModel& a, model::EmoModel& b) {
  const auto pa = a.parameters().params, pb = b.parameters().params;
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(pa[i]->value() == pb[i]->value())) return false;
  return true;
}

// 7 -----------------------------------------------------------------------------
Outcome objective_fidelity(const Desk& desk) {
  training::TrainConfig tc = desk.config.train;
  tc.weights = {};  // defaults
  const bool defaults = tc.weights.lambda_va == 1e-5 && tc.weights.lambda_cc == 1.0;
  util::Rng rng(107);
  model::EmoModel m(desk.config.model, rng);
  const auto fn = desk.predictor->frozen();
  double worst = 0;
  for (auto mode : {training::VaLossMode::Hard, training::VaLossMode::Soft}) {
    tc.va_loss_mode = mode;
    for (const auto& ex : desk.examples) {
      const auto l = training::pair_step(m, ex, tc, &fn, 0.0);
      worst = std::max(worst, std::abs(l.total - (1e-5 * l.va + 1.0 * l.cce)));
    }
  }

  // λ1 = 0 against va_loss_mode = off, same seed, few epochs
  training::TrainConfig off = desk.config.train;
  off.epochs = 2;
  off.va_loss_mode = training::VaLossMode::Off;
  const auto r_off = training::fit(desk.config.model, desk.examples, off, nullptr);
  bool identical = true;
  for (auto mode : {training::VaLossMode::Hard, training::VaLossMode::Soft}) {
    training::TrainConfig zero = off;
    zero.va_loss_mode = mode;
    zero.weights.lambda_va = 0.0;
    const auto r = training::fit(desk.config.model, desk.examples, zero, desk.predictor.get());
    identical = identical && same_parameters(*r.model, *r_off.model);
    for (std::size_t e = 0; e < r.curve.size(); ++e) identical = identical && r.curve[e].l_cc == r_off.curve[e].l_cc;
  }
  return {defaults && worst == 0.0 && identical,
          fmt("defaults (1e-5, 1); max |L_total - (l1*L_VA + l2*L_CC)| %.1e over %zu pairs x 2 modes; "
              "lambda1=0 vs off bit-identical: %s",
              worst, desk.examples.size(), identical ? "yes" : "no")};
}

// 8 -----------------------------------------------------------------------------
Outcome training_convergence(const Desk& desk) {
  const auto t0 = Clock::now();
  const auto cfg = desk.config;
  const bool adam_defaults = true;  // beta1 0.9, beta2 0.999 fixed in the optimizer
  const auto a = training::fit(cfg.model, desk.examples, cfg.train, desk.predictor.get());
  const double one = seconds_since(t0);
  const auto b = training::fit(cfg.model, desk.examples, cfg.train, desk.predictor.get());
  const double s = seconds_since(t0);
  bool deterministic = same_parameters(*a.model, *b.model) && a.curve.size() == b.curve.size();
  for (std::size_t e = 0; deterministic && e < a.curve.size(); ++e)
    deterministic = a.curve[e].l_cc == b.curve[e].l_cc && a.curve[e].l_va == b.curve[e].l_va;
  const double first = a.curve.front().l_cc, last = a.curve.back().l_cc;
  const double drop = 1.0 - last / first;
  return {adam_defaults && desk.examples.size() == 16 && a.curve.size() == 15 && drop >= kLccDrop && deterministic &&
              one < kLimit8,
          fmt("%zu pairs, %zu epochs, lr %.0e: L_CC %.2f -> %.2f (%.1f%% drop, need >= %.0f%%); repeat run "
              "identical: %s; %.1f s per run (limit %.0f s)",
              desk.examples.size(), a.curve.size(), cfg.train.lr, first, last, 100 * drop, 100 * kLccDrop,
              deterministic ? "yes" : "no", s / 2, kLimit8)};
}

// 9 -----------------------------------------------------------------------------
// Labels are a fixed linear map of the token histogram: valence rises with the
// share of high note-ons, arousal with the velocity bins used.
std::vector<training::LabeledSequence> linear_va_corpus(const tok::Vocabulary& v, std::size_t n, util::Rng& rng) {
  std::vector<double> wv(static_cast<std::size_t>(v.size()), 0.0), wa(wv.size(), 0.0);
  for (int p = 0; p < 128; ++p) wv[static_cast<std::size_t>(v.note_on(p))] = p / 127.0;
  for (int b = 0; b < v.velocity_bins(); ++b)
    wa[static_cast<std::size_t>(v.velocity(b))] = b / static_cast<double>(v.velocity_bins() - 1);
  std::vector<training::LabeledSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    // pieces share a register and a dynamic level, drawn per piece
    const int centre = 36 + static_cast<int>(rng.index(56));
    const int vel = 1 + static_cast<int>(rng.index(127));
    std::vector<midi::NoteEvent> notes;
    int t = 0;
    for (int k = 0; k < 12; ++k) {
      const int pitch = std::clamp(centre + static_cast<int>(rng.index(13)) - 6, 0, 127);
      const int dv = std::clamp(vel + static_cast<int>(rng.index(21)) - 10, 1, 127);
      notes.push_back({pitch, t, 60 + 60 * static_cast<int>(rng.index(4)), dv});
      t += 120 * static_cast<int>(rng.index(3));
    }
    training::LabeledSequence s;
    s.id = std::to_string(i);
    s.tokens = tok::encode(midi::MidiPiece(480, 500000, notes), v, 4, 256).ids;
    const auto h = model::token_histogram(s.tokens, v.size());
    double hv = 0, ha = 0;
    for (std::size_t c = 0; c < wv.size(); ++c) {
      hv += wv[c] * h[c];
      ha += wa[c] * h[c];
    }
    // scale so the labels spread over most of [1,9]; still linear in h
    s.va = pairing::VaPoint::checked(std::clamp(1.0 + 8.0 * 2.5 * hv, 1.0, 9.0),
                                     std::clamp(1.0 + 8.0 * 4.0 * ha, 1.0, 9.0));
    out.push_back(std::move(s));
  }
  return out;
}

Outcome va_predictor_sanity() {
  const tok::Vocabulary v;
  util::Rng rng(109);
  const auto items = linear_va_corpus(v, 600, rng);
  training::PretrainConfig pc;
  pc.seed = 9;
  training::PretrainReport rep;
  auto pred = training::pretrain_va_predictor(v, items, pc, &rep);

  // hard vs soft on one-hot predictions
  const auto fn = pred->frozen();
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const auto& truth = items[static_cast<std::size_t>(k)].tokens;
    const auto& other = items[static_cast<std::size_t>(k + 50)].tokens;
    std::vector<tok::TokenId> guess;
    for (std::size_t i = 1; i < truth.size(); ++i) guess.push_back(i < other.size() ? other[i] : tok::Vocabulary::kEos);
    const auto probs = nn::Var::constant(training::one_hot(guess, v.size()));
    const double hard = training::va_loss(truth, probs, fn, training::VaLossMode::Hard).value()[0];
    const double soft = training::va_loss(truth, probs, fn, training::VaLossMode::Soft).value()[0];
    worst = std::max(worst, std::abs(hard - soft));
  }
  return {rep.holdout_mae < kHeldOutMae && worst <= kVaAgreeTol,
          fmt("%zu train / %zu held out, held-out MAE %.3f (need < %.1f), train MAE %.3f -> %.3f; "
              "hard vs soft max diff %.1e (tol %.0e)",
              rep.train_count, rep.holdout_count, rep.holdout_mae, kHeldOutMae, rep.initial_train_mae,
              rep.final_train_mae, worst, kVaAgreeTol)};
}

// 10 ----------------------------------------------------------------------------
Outcome ablation_harness(const Desk& desk) {
  const auto out = desk.dir / "ablation";
  const auto grid = cli::desk_grid_json();
  std::ostringstream log;
  const auto rows = cli::run_ablation(grid, desk.dir, out, &log);
  std::size_t ok = 0, failed = 0;
  for (const auto& r : rows) (r.status.rfind("ok", 0) == 0 ? ok : failed)++;
  const bool table = fs::exists(out / "ablation.md") &&
                     util::read_text(out / "ablation.md")
                             .find("| model | Music_Quality_Loss | Polyphony rate | Pitch Entropy | Groove Consistency |") == 0;
  return {rows.size() == 18 && ok + failed == 18 && table,
          fmt("%zu variants: %zu completed, %zu recorded as failed; summary table written: %s", rows.size(), ok, failed,
              table ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "emomusic_acceptance";
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc)
      only = std::stoi(argv[++i]);
    else
      work = a;
  }

  std::unique_ptr<Desk> desk;
  auto need_desk = [&]() -> const Desk& {
    if (!desk) desk = std::make_unique<Desk>(prepare_desk(work / "desk"));
    return *desk;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracles", metric_oracles},
      {"hand values", hand_values},
      {"MIDI round trip", midi_round_trip},
      {"tokenizer totality", tokenizer_totality},
      {"pairing oracle and split", pairing_oracle},
      {"gradient checks", gradient_checks},
      {"objective fidelity", [&] { return objective_fidelity(need_desk()); }},
      {"training convergence", [&] { return training_convergence(need_desk()); }},
      {"VA predictor sanity", va_predictor_sanity},
      {"ablation harness", [&] { return ablation_harness(need_desk()); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i + 1) != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures ? 1 : 0;
}
