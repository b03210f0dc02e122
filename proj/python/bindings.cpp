// Python bindings for the numerical core: MIDI, metrics, tokenizer, pairing,
// plus the command-line runner so every subcommand is reachable from Python.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "emomusic/cli/app.hpp"
#include "emomusic/error.hpp"
#include "emomusic/metrics.hpp"
#include "emomusic/midi_io.hpp"
#include "emomusic/pairing.hpp"
#include "emomusic/tokenizer.hpp"
#include "emomusic/util/io.hpp"

namespace py = pybind11;
using namespace emomusic;

namespace {

std::vector<std::uint8_t> as_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "emomusic core";

  static py::exception<Error> error_type(m, "EmomusicError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      // code name is the first token so Python callers can branch on it
      py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(std::string(to_string(e.code())) + ": " +
                                                                           e.message());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  // midi ---------------------------------------------------------------------
  py::class_<midi::NoteEvent>(m, "NoteEvent")
      .def(py::init([](int pitch, std::int64_t onset, std::int64_t duration, int velocity) {
             return midi::NoteEvent{pitch, onset, duration, velocity};
           }),
           py::arg("pitch"), py::arg("onset"), py::arg("duration"), py::arg("velocity") = 64)
      .def_readwrite("pitch", &midi::NoteEvent::pitch)
      .def_readwrite("onset", &midi::NoteEvent::onset)
      .def_readwrite("duration", &midi::NoteEvent::duration)
      .def_readwrite("velocity", &midi::NoteEvent::velocity)
      .def("__eq__", [](const midi::NoteEvent& a, const midi::NoteEvent& b) { return a == b; })
      .def("__repr__", [](const midi::NoteEvent& n) {
        std::ostringstream s;
        s << "NoteEvent(pitch=" << n.pitch << ", onset=" << n.onset << ", duration=" << n.duration
          << ", velocity=" << n.velocity << ")";
        return s.str();
      });

  py::class_<midi::MidiPiece>(m, "MidiPiece")
      .def(py::init<int, std::int64_t, std::vector<midi::NoteEvent>>(), py::arg("ticks_per_beat") = 480,
           py::arg("tempo_us_per_beat") = midi::kDefaultTempo, py::arg("notes") = std::vector<midi::NoteEvent>{})
      .def_property_readonly("ticks_per_beat", &midi::MidiPiece::ticks_per_beat)
      .def_property_readonly("tempo_us_per_beat", &midi::MidiPiece::tempo_us_per_beat)
      .def_property_readonly("notes", &midi::MidiPiece::notes)
      .def_property_readonly("end_tick", &midi::MidiPiece::end_tick)
      .def("__eq__", [](const midi::MidiPiece& a, const midi::MidiPiece& b) { return a == b; })
      .def("__len__", [](const midi::MidiPiece& p) { return p.notes().size(); });

  m.def("parse_midi", [](const py::bytes& b) { return midi::parse_midi(as_bytes(b)); });
  m.def("write_midi", [](const midi::MidiPiece& p) { return to_bytes(midi::write_midi(p)); });
  m.def("read_midi", [](const std::filesystem::path& path) { return midi::parse_midi(util::read_bytes(path)); });
  m.def("save_midi", [](const std::filesystem::path& path, const midi::MidiPiece& p) {
    util::write_bytes(path, midi::write_midi(p));
  });
  m.def(
      "piano_roll",
      [](const midi::MidiPiece& p, int spb) {
        // list of per-step sounding pitch lists
        const auto roll = midi::to_piano_roll(p, spb);
        std::vector<std::vector<int>> cols(roll.steps());
        for (std::size_t t = 0; t < roll.steps(); ++t)
          for (int pitch = 0; pitch < 128; ++pitch)
            if (roll.sounding(pitch, t)) cols[t].push_back(pitch);
        return cols;
      },
      py::arg("piece"), py::arg("steps_per_beat") = midi::kDefaultStepsPerBeat);

  // metrics ------------------------------------------------------------------
  m.def("pitch_entropy", &metrics::pitch_entropy);
  m.def(
      "polyphony_rate",
      [](const midi::MidiPiece& p, int spb, bool total_steps) {
        return metrics::polyphony_rate(midi::to_piano_roll(p, spb), total_steps
                                                                       ? metrics::PolyphonyDenominator::TotalSteps
                                                                       : metrics::PolyphonyDenominator::SoundingSteps);
      },
      py::arg("piece"), py::arg("steps_per_beat") = midi::kDefaultStepsPerBeat, py::arg("total_steps") = false);
  m.def(
      "groove_consistency",
      [](const midi::MidiPiece& p, int spb, int spm) {
        return metrics::groove_consistency(midi::to_piano_roll(p, spb), spm);
      },
      py::arg("piece"), py::arg("steps_per_beat") = midi::kDefaultStepsPerBeat, py::arg("steps_per_measure") = 16);
  m.def(
      "music_quality_loss",
      [](double poly, double entropy, double groove) { return metrics::music_quality_loss({poly, entropy, groove}); },
      py::arg("polyphony_rate"), py::arg("pitch_entropy"), py::arg("groove_consistency"));
  m.attr("REFERENCE_TRIPLE") = py::make_tuple(metrics::kReferenceTriple.polyphony_rate,
                                              metrics::kReferenceTriple.pitch_entropy,
                                              metrics::kReferenceTriple.groove_consistency);
  m.def(
      "evaluate",
      [](const midi::MidiPiece& p) {
        const auto e = metrics::evaluate(p, {});
        py::dict d;
        d["polyphony_rate"] = e.polyphony_rate;
        d["pitch_entropy"] = e.pitch_entropy;
        d["groove_consistency"] = e.groove_consistency;
        d["music_quality_loss"] = e.music_quality_loss;
        d["error"] = e.error;
        return d;
      },
      "All three metrics and the loss; failures land in 'error' instead of raising.");

  // tokenizer ----------------------------------------------------------------
  py::class_<tok::Vocabulary>(m, "Vocabulary")
      .def(py::init<int, int>(), py::arg("time_shift_bins") = 100, py::arg("velocity_bins") = 32)
      .def_property_readonly("size", &tok::Vocabulary::size)
      .def("note_on", &tok::Vocabulary::note_on)
      .def("note_off", &tok::Vocabulary::note_off)
      .def("time_shift", &tok::Vocabulary::time_shift)
      .def("velocity", &tok::Vocabulary::velocity)
      .def("layout", &tok::Vocabulary::layout)
      .def("hash", &tok::Vocabulary::hash);
  m.attr("PAD") = tok::Vocabulary::kPad;
  m.attr("BOS") = tok::Vocabulary::kBos;
  m.attr("EOS") = tok::Vocabulary::kEos;
  m.def(
      "encode",
      [](const midi::MidiPiece& p, const tok::Vocabulary& v, int spb, std::size_t max_len) {
        return tok::encode(p, v, spb, max_len).ids;
      },
      py::arg("piece"), py::arg("vocab") = tok::Vocabulary(), py::arg("steps_per_beat") = midi::kDefaultStepsPerBeat,
      py::arg("max_len") = 256);
  m.def(
      "decode",
      [](const std::vector<tok::TokenId>& ids, const tok::Vocabulary& v, int spb) {
        return tok::decode({ids, std::max<std::size_t>(ids.size(), 1)}, v, spb);
      },
      py::arg("ids"), py::arg("vocab") = tok::Vocabulary(), py::arg("steps_per_beat") = midi::kDefaultStepsPerBeat);
  m.def(
      "well_formed",
      [](const std::vector<tok::TokenId>& ids, const tok::Vocabulary& v, std::size_t max_len) {
        return tok::well_formed({ids, max_len}, v);
      },
      py::arg("ids"), py::arg("vocab") = tok::Vocabulary(), py::arg("max_len") = 256);

  // pairing ------------------------------------------------------------------
  m.def("similarity", [](std::pair<double, double> x, std::pair<double, double> y) {
    return pairing::similarity({x.first, x.second}, {y.first, y.second}).value();
  });
  m.def("normalize_va", &pairing::normalize_va, py::arg("value"), py::arg("source_min"), py::arg("source_max"));
  m.def(
      "pair",
      [](const std::vector<std::tuple<std::string, double, double>>& midis,
         const std::vector<std::tuple<std::string, double, double>>& images) {
        auto catalog = [](const auto& rows, pairing::ItemKind kind) {
          pairing::Catalog c;
          for (const auto& [id, v, a] : rows) c.push_back({id, kind, pairing::VaPoint::checked(v, a), ""});
          return c;
        };
        std::vector<std::tuple<std::string, std::string, double>> out;
        for (const auto& p : pairing::pair_datasets(catalog(midis, pairing::ItemKind::Midi),
                                                    catalog(images, pairing::ItemKind::Image))
                                 .pairs)
          out.emplace_back(p.midi_id, p.image_id, p.similarity.value());
        return out;
      },
      py::arg("midis"), py::arg("images"),
      "(id, valence, arousal) rows in, (midi_id, image_id, similarity) rows out, ascending midi id.");

  // cli ----------------------------------------------------------------------
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a subcommand in-process; returns (exit_code, stdout, stderr).");
}
