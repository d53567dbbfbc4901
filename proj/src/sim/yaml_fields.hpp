#pragma once

// YAML field readers shared by the scenario and batch parsers. Every failure
// is a ScenarioParseError carrying the line and dotted field path.

#include <initializer_list>
#include <string>

#include <yaml-cpp/yaml.h>

#include "cinch/sim/scenario.hpp"

namespace cinch::sim::detail {

struct Fields {
  std::string source;

  static std::size_t line_of(const YAML::Node& node) {
    const auto mark = node.Mark();
    return mark.line >= 0 ? static_cast<std::size_t>(mark.line) + 1 : 0;
  }

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& message) const {
    throw ScenarioParseError(source, line_of(node), field, message);
  }

  static std::string join(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
  }

  void require_map(const YAML::Node& node, const std::string& field) const {
    if (!node.IsMap()) fail(node, field, "expected a mapping");
  }

  void allow_keys(const YAML::Node& node, const std::string& field, std::initializer_list<const char*> keys) const {
    require_map(node, field);
    for (const auto& item : node) {
      const auto key = item.first.as<std::string>();
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) fail(item.first, join(field, key), "unknown field");
    }
  }

  double number(const YAML::Node& node, const std::string& field) const {
    if (!node.IsScalar()) fail(node, field, "expected a number");
    try {
      return node.as<double>();
    } catch (const YAML::Exception&) {
      fail(node, field, "expected a number, got '" + node.Scalar() + "'");
    }
  }

  double positive(const YAML::Node& node, const std::string& field) const {
    const double v = number(node, field);
    if (!(v > 0.0)) fail(node, field, "must be > 0");
    return v;
  }

  long long integer(const YAML::Node& node, const std::string& field) const {
    if (!node.IsScalar()) fail(node, field, "expected an integer");
    try {
      return node.as<long long>();
    } catch (const YAML::Exception&) {
      fail(node, field, "expected an integer, got '" + node.Scalar() + "'");
    }
  }

  bool boolean(const YAML::Node& node, const std::string& field) const {
    if (!node.IsScalar()) fail(node, field, "expected true or false");
    try {
      return node.as<bool>();
    } catch (const YAML::Exception&) {
      fail(node, field, "expected true or false, got '" + node.Scalar() + "'");
    }
  }

  std::string text(const YAML::Node& node, const std::string& field) const {
    if (!node.IsScalar()) fail(node, field, "expected a string");
    return node.Scalar();
  }

  // Reads `key` into `out` when present.
  template <typename Fn>
  void optional(const YAML::Node& map, const std::string& parent, const char* key, Fn&& read) const {
    const YAML::Node node = map[key];
    if (node) read(node, join(parent, key));
  }
};

YAML::Node load_yaml(const std::string& text, const std::string& source);
void check_schema_version(const Fields& f, const YAML::Node& root);
void read_plant(const Fields& f, const YAML::Node& node, const std::string& field, PlantConfig& plant);
void read_grasp(const Fields& f, const YAML::Node& node, const std::string& field, grasp::GraspConfig& grasp,
                bool& auto_calibrate);
void read_bus(const Fields& f, const YAML::Node& node, const std::string& field, bus::BusConfig& bus);
std::vector<Step> read_script(const Fields& f, const YAML::Node& node, const std::string& field);
Expectation read_expect(const Fields& f, const YAML::Node& node, const std::string& field);
telemetry::FruitClass read_class(const Fields& f, const YAML::Node& node, const std::string& field);

}  // namespace cinch::sim::detail
