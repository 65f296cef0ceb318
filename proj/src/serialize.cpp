#include "tactile/serialize.hpp"

#include <fstream>
#include <sstream>

namespace tactile {

namespace json_schema {

void fail(const std::string& pointer, const std::string& message) {
    throw ConfigError((pointer.empty() ? std::string("/") : pointer) + ": " + message);
}

void require_object(const nlohmann::json& j, const std::string& pointer) {
    if (!j.is_object()) fail(pointer, "expected an object");
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& pointer) {
    require_object(j, pointer);
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(pointer + "/" + key, "unknown key");
    }
}

double number(const nlohmann::json& j, const char* key, const std::string& pointer) {
    const std::string at = pointer + "/" + key;
    if (!j.contains(key)) fail(at, "missing required number");
    const auto& v = j.at(key);
    if (!v.is_number()) fail(at, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(at, "must be finite");
    return d;
}

double number_or(const nlohmann::json& j, const char* key, double fallback, const std::string& pointer) {
    return j.contains(key) ? number(j, key, pointer) : fallback;
}

int integer(const nlohmann::json& j, const char* key, const std::string& pointer) {
    const std::string at = pointer + "/" + key;
    if (!j.contains(key)) fail(at, "missing required integer");
    const auto& v = j.at(key);
    if (!v.is_number_integer()) fail(at, "expected an integer");
    const auto i = v.get<long long>();
    if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) fail(at, "out of range");
    return static_cast<int>(i);
}

int integer_or(const nlohmann::json& j, const char* key, int fallback, const std::string& pointer) {
    return j.contains(key) ? integer(j, key, pointer) : fallback;
}

bool boolean_or(const nlohmann::json& j, const char* key, bool fallback, const std::string& pointer) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) fail(pointer + "/" + key, "expected a boolean");
    return j.at(key).get<bool>();
}

std::string string_or(const nlohmann::json& j, const char* key, const std::string& fallback,
                      const std::string& pointer) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) fail(pointer + "/" + key, "expected a string");
    return j.at(key).get<std::string>();
}

std::vector<double> numbers(const nlohmann::json& j, std::size_t n, const std::string& pointer) {
    if (!j.is_array() || j.size() != n) fail(pointer, "expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (!j[i].is_number()) fail(pointer + "/" + std::to_string(i), "expected a number");
        out.push_back(j[i].get<double>());
        if (!std::isfinite(out.back())) fail(pointer + "/" + std::to_string(i), "must be finite");
    }
    return out;
}

}  // namespace json_schema

using namespace json_schema;

nlohmann::json pose_to_json(const Pose6D& p) {
    const Vec3 e = p.euler_zyx_deg();
    return {{"tx", p.t.x()}, {"ty", p.t.y()}, {"tz", p.t.z()}, {"rx", e.x()}, {"ry", e.y()}, {"rz", e.z()}};
}

Pose6D pose_from_json(const nlohmann::json& j, const std::string& pointer) {
    reject_unknown_keys(j, {"tx", "ty", "tz", "rx", "ry", "rz"}, pointer);
    return Pose6D::from_euler_deg(Vec3(number(j, "tx", pointer), number(j, "ty", pointer), number(j, "tz", pointer)),
                                  number(j, "rx", pointer), number(j, "ry", pointer), number(j, "rz", pointer));
}

nlohmann::json wrench_to_json(const Wrench& w) {
    return {{"fx", w.force.x()},  {"fy", w.force.y()},  {"fz", w.force.z()},
            {"tx", w.torque.x()}, {"ty", w.torque.y()}, {"tz", w.torque.z()},
            {"saturated", w.saturated}};
}

Wrench wrench_from_json(const nlohmann::json& j, const std::string& pointer) {
    reject_unknown_keys(j, {"fx", "fy", "fz", "tx", "ty", "tz", "saturated"}, pointer);
    Wrench w;
    w.force = Vec3(number(j, "fx", pointer), number(j, "fy", pointer), number(j, "fz", pointer));
    w.torque = Vec3(number(j, "tx", pointer), number(j, "ty", pointer), number(j, "tz", pointer));
    w.saturated = boolean_or(j, "saturated", false, pointer);
    return w;
}

nlohmann::json delta_to_json(const PoseDelta& d) {
    return {{"dx", d.v(0)}, {"dy", d.v(1)}, {"dz", d.v(2)}, {"wx", d.v(3)}, {"wy", d.v(4)}, {"wz", d.v(5)}};
}

PoseDelta delta_from_json(const nlohmann::json& j, const std::string& pointer) {
    require_object(j, pointer);
    reject_unknown_keys(j, {"dx", "dy", "dz", "wx", "wy", "wz"}, pointer);
    PoseDelta d;
    const char* keys[] = {"dx", "dy", "dz", "wx", "wy", "wz"};
    for (int i = 0; i < 6; ++i) d.v(i) = number(j, keys[i], pointer);
    return d;
}

nlohmann::json samples_to_json(const std::vector<CalibrationSample>& samples) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : samples) arr.push_back({{"delta", delta_to_json(s.delta)}, {"wrench", wrench_to_json(s.wrench)}});
    return {{"version", 1}, {"samples", arr}};
}

std::vector<CalibrationSample> samples_from_json(const nlohmann::json& j) {
    require_object(j, "");
    reject_unknown_keys(j, {"version", "samples"}, "");
    if (integer(j, "version", "") != 1) fail("/version", "unsupported samples version");
    if (!j.contains("samples") || !j.at("samples").is_array()) fail("/samples", "expected an array");
    std::vector<CalibrationSample> out;
    for (std::size_t i = 0; i < j.at("samples").size(); ++i) {
        const auto& e = j.at("samples")[i];
        const std::string p = "/samples/" + std::to_string(i);
        require_object(e, p);
        reject_unknown_keys(e, {"delta", "wrench"}, p);
        if (!e.contains("delta")) fail(p + "/delta", "missing");
        if (!e.contains("wrench")) fail(p + "/wrench", "missing");
        out.push_back({delta_from_json(e.at("delta"), p + "/delta"), wrench_from_json(e.at("wrench"), p + "/wrench")});
    }
    return out;
}

nlohmann::json stiffness_to_json(const StiffnessMatrix& s) {
    std::vector<double> k;
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) k.push_back(s.k(r, c));
    return {{"layout", "row-major 6x6, rows (Fx,Fy,Fz,Tx,Ty,Tz), columns (dx,dy,dz,wx,wy,wz)"},
            {"units", {{"force_per_mm", "N/mm"},
                       {"force_per_rad", "N/rad"},
                       {"torque_per_mm", "N"},
                       {"torque_per_rad", "N mm/rad"}}},
            {"k", k}};
}

StiffnessMatrix stiffness_from_json(const nlohmann::json& j, const std::string& pointer) {
    reject_unknown_keys(j, {"layout", "units", "k"}, pointer);
    if (!j.contains("k")) fail(pointer + "/k", "missing stiffness values");
    const auto v = numbers(j.at("k"), 36, pointer + "/k");
    StiffnessMatrix s;
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) s.k(r, c) = v[static_cast<std::size_t>(r * 6 + c)];
    return s;
}

nlohmann::json calibration_report_to_json(const CalibrationReport& r) {
    std::vector<double> rms(r.rms_residual.data(), r.rms_residual.data() + 6);
    return {{"stiffness", stiffness_to_json(r.stiffness)},
            {"rms_residual", rms},
            {"condition_number", r.condition_number},
            {"samples", r.samples}};
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << text;
        if (!out) throw DataError("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace tactile
