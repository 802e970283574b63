#include "sqn/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sqn {

AppConfig parse_app_config(const std::string& text) {
  AppConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    const std::string where = " (config line " + std::to_string(lineno) + ")";

    if (key == "target") {
      if (!(ls >> cfg.preprocess.target_w >> cfg.preprocess.target_h) ||
          cfg.preprocess.target_w <= 0 || cfg.preprocess.target_h <= 0)
        throw std::invalid_argument("bad target dims" + where);
    } else if (key == "channel_order") {
      std::string order;
      ls >> order;
      if (order == "rgb")
        cfg.preprocess.order = ChannelOrder::kRGB;
      else if (order == "bgr")
        cfg.preprocess.order = ChannelOrder::kBGR;
      else
        throw std::invalid_argument("channel_order must be rgb or bgr" + where);
    } else if (key == "mean") {
      if (!(ls >> cfg.preprocess.mean[0] >> cfg.preprocess.mean[1] >> cfg.preprocess.mean[2]))
        throw std::invalid_argument("mean needs three values" + where);
      for (double m : cfg.preprocess.mean)
        if (!std::isfinite(m)) throw std::invalid_argument("mean must be finite" + where);
    } else if (key == "power") {
      std::string platform;
      double watts = 0.0;
      if (!(ls >> platform >> watts) || !(watts > 0.0))
        throw std::invalid_argument("power needs a platform name and watts > 0" + where);
      cfg.power.chip_watts[platform] = watts;
    } else if (key == "resize") {
      std::string method;
      ls >> method;
      if (method != "bilinear")
        throw std::invalid_argument("only bilinear resize is available" + where);
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'" + where);
    }
  }
  return cfg;
}

AppConfig load_app_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_app_config(buf.str());
}

}  // namespace sqn
