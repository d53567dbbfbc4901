// Python bindings. Structured results cross the boundary as JSON text and are
// decoded by the package wrapper.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "cinch/dxl/protocol.hpp"
#include "cinch/sim/batch.hpp"
#include "cinch/sim/runner.hpp"
#include "cinch/telemetry/analysis.hpp"
#include "cinch/telemetry/log.hpp"

namespace py = pybind11;
using namespace cinch;
using nlohmann::json;

namespace {

dxl::Bytes to_bytes(const py::bytes& b) {
  const std::string s = b;
  return dxl::Bytes(s.begin(), s.end());
}

py::bytes from_bytes(const dxl::Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

std::string scenario_result(const sim::ScenarioResult& r) {
  json j = {{"name", r.name}, {"mismatches", r.mismatches}, {"notes", r.notes},
            {"antagonism_violations", r.antagonism_violations}, {"log", sim::log_text(r.samples)}};
  j["outcome"] = r.outcome ? telemetry::to_json(*r.outcome) : json(nullptr);
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  j["records"] = json::array();
  for (const auto& rec : r.records) j["records"].push_back(telemetry::to_json(rec));
  return j.dump();
}

std::string run_scenario_file(const std::string& path) { return scenario_result(sim::run_scenario(sim::load_scenario(path))); }

std::string run_scenario_text(const std::string& text) {
  return scenario_result(sim::run_scenario(sim::parse_scenario(text)));
}

std::string run_batch(const std::string& path, std::optional<double> current_ma, std::optional<double> cap_ma,
                      double damage_scale) {
  sim::BatchOverrides o;
  o.reference_current_ma = current_ma;
  o.current_cap_ma = cap_ma;
  o.damage_force_scale = damage_scale;
  const auto r = sim::run_batch(sim::load_batch(path), o);
  json rates = json::array();
  for (const auto& row : r.rates) {
    rates.push_back({{"fruit_class", telemetry::to_string(row.fruit_class)},
                     {"n", row.n},
                     {"damaged", row.damaged},
                     {"damage_rate", row.damage_rate}});
  }
  json records = json::array();
  for (const auto& rec : r.records) records.push_back(telemetry::to_json(rec));
  return json{{"runs", r.runs.size()},     {"failures", r.failures}, {"damaged", r.damaged},
              {"violations", r.violations}, {"clean", r.clean()},     {"rates", rates},
              {"records", records},         {"report", sim::render_batch_report(r)}}
      .dump();
}

double compute_threshold(const std::vector<double>& forces) {
  std::vector<telemetry::BurstSample> samples;
  for (std::size_t i = 0; i < forces.size(); ++i) samples.push_back({std::to_string(i + 1), forces[i]});
  return telemetry::compute_threshold(samples).threshold;
}

std::string rate_table(const std::string& records_json) {
  std::vector<telemetry::HarvestRecord> records;
  for (const auto& j : json::parse(records_json)) records.push_back(telemetry::record_from_json(j));
  return telemetry::render_rate_table(telemetry::rate_table(records));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gripper control stack: protocol codec, simulator and analysis.";

  py::register_exception<sim::ScenarioParseError>(m, "ScenarioParseError", PyExc_ValueError);
  py::register_exception<telemetry::AnalysisError>(m, "AnalysisError", PyExc_ValueError);

  m.def("crc16", [](const py::bytes& data) { return dxl::crc16(to_bytes(data)); }, py::arg("data"));
  m.def(
      "encode_instruction",
      [](int id, int instruction, const py::bytes& params) {
        const auto ins = dxl::instruction_from_byte(static_cast<std::uint8_t>(instruction));
        if (!ins) throw py::value_error("unknown instruction " + std::to_string(instruction));
        return from_bytes(dxl::encode({static_cast<std::uint8_t>(id), *ins, to_bytes(params)}));
      },
      py::arg("id"), py::arg("instruction"), py::arg("params") = py::bytes());
  m.def(
      "decode_frames",
      [](const py::bytes& data) {
        dxl::DecoderState st;
        const auto r = dxl::decode_frames(st, to_bytes(data));
        py::list frames;
        for (const auto& f : r.frames) {
          py::dict d;
          d["id"] = f.id;
          d["instruction"] = f.instruction;
          d["payload"] = from_bytes(f.payload);
          frames.append(d);
        }
        py::list errors;
        for (const auto& e : r.errors) errors.append(std::string(dxl::to_string(e.kind)));
        return py::make_tuple(frames, errors);
      },
      py::arg("data"));

  m.def("run_scenario_file", &run_scenario_file, py::arg("path"));
  m.def("run_scenario_text", &run_scenario_text, py::arg("text"));
  m.def("run_batch", &run_batch, py::arg("path"), py::arg("current_ma") = py::none(),
        py::arg("current_cap_ma") = py::none(), py::arg("damage_scale") = 1.0);
  m.def("compute_threshold", &compute_threshold, py::arg("forces"));
  m.def("format_percent", &telemetry::format_percent, py::arg("k"), py::arg("n"));
  m.def("rate_table", &rate_table, py::arg("records_json"));
}
