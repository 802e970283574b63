#pragma once

#include <string>

#include "sqn/bench.hpp"
#include "sqn/preprocess.hpp"

namespace sqn {

// Application configuration file: preprocessing parameters and the chip power
// profile. Line-oriented key/value text, '#' comments:
//   target 227 227
//   channel_order bgr
//   mean 104 117 123
//   power i3 4.1187
struct AppConfig {
  PreprocessConfig preprocess;
  PowerProfile power;
};

AppConfig parse_app_config(const std::string& text);
AppConfig load_app_config(const std::string& path);

}  // namespace sqn
