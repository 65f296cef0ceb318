#pragma once

#include "tactile/pose.hpp"
#include "tactile/wrench.hpp"

#include <json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>

namespace tactile {

// {tx, ty, tz} mm and {rx, ry, rz} deg, Z-Y-X intrinsic.
nlohmann::json pose_to_json(const Pose6D& p);
Pose6D pose_from_json(const nlohmann::json& j, const std::string& pointer = "");

// {fx, fy, fz} N, {tx, ty, tz} N mm, saturated.
nlohmann::json wrench_to_json(const Wrench& w);
Wrench wrench_from_json(const nlohmann::json& j, const std::string& pointer = "");

nlohmann::json delta_to_json(const PoseDelta& d);
PoseDelta delta_from_json(const nlohmann::json& j, const std::string& pointer = "");

// {"version": 1, "samples": [{"delta": {...}, "wrench": {...}}]}
nlohmann::json samples_to_json(const std::vector<CalibrationSample>& samples);
std::vector<CalibrationSample> samples_from_json(const nlohmann::json& j);

// 36 row-major values with units.
nlohmann::json stiffness_to_json(const StiffnessMatrix& s);
StiffnessMatrix stiffness_from_json(const nlohmann::json& j, const std::string& pointer = "");

nlohmann::json calibration_report_to_json(const CalibrationReport& r);

// Schema helpers; errors are ConfigError messages prefixed with the JSON pointer.
namespace json_schema {

void require_object(const nlohmann::json& j, const std::string& pointer);
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& pointer);
double number(const nlohmann::json& j, const char* key, const std::string& pointer);
double number_or(const nlohmann::json& j, const char* key, double fallback, const std::string& pointer);
int integer(const nlohmann::json& j, const char* key, const std::string& pointer);
int integer_or(const nlohmann::json& j, const char* key, int fallback, const std::string& pointer);
bool boolean_or(const nlohmann::json& j, const char* key, bool fallback, const std::string& pointer);
std::string string_or(const nlohmann::json& j, const char* key, const std::string& fallback,
                      const std::string& pointer);
// Fixed-length numeric array.
std::vector<double> numbers(const nlohmann::json& j, std::size_t n, const std::string& pointer);
[[noreturn]] void fail(const std::string& pointer, const std::string& message);

}  // namespace json_schema

nlohmann::json read_json(const std::filesystem::path& path);
// Writes to a temporary sibling and renames, so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace tactile
