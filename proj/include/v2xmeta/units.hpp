#pragma once

#include <cmath>

namespace v2xmeta {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double ratio) { return 10.0 * std::log10(ratio); }

// Powers are carried in milliwatts so that dBm maps directly.
inline double dbm_to_mw(double dbm) { return db_to_linear(dbm); }
inline double mw_to_dbm(double mw) { return linear_to_db(mw); }

inline double kmh_to_mps(double kmh) { return kmh / 3.6; }

inline constexpr double kBytesPerPayloadUnit = 1060.0;
inline constexpr double kBitsPerPayloadUnit = 8.0 * kBytesPerPayloadUnit;

}  // namespace v2xmeta
