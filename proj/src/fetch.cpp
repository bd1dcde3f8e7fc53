#include "dstt/fetch.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dstt/errors.hpp"

namespace dstt::data {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  const fs::path tmp = p.string() + ".part";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << bytes;
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

std::string year_url(const std::string& tmpl, int year) {
  std::string url = tmpl;
  const std::string key = "{year}";
  for (auto pos = url.find(key); pos != std::string::npos; pos = url.find(key)) {
    url.replace(pos, key.size(), std::to_string(year));
  }
  return url;
}

std::string download(const std::string& url, const FetchOptions& options) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw FetchError("malformed URL '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
  std::string last_error;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(options.timeout_seconds, 0);
    client.set_read_timeout(options.timeout_seconds, 0);
    auto res = client.Get(path);
    if (res && res->status == 200) return res->body;
    last_error = res ? "HTTP status " + std::to_string(res->status) : httplib::to_string(res.error());
  }
  throw FetchError("download of " + url + " failed (" + last_error +
                   "); check connectivity or the endpoint (set " + kOmniUrlEnv + ") and retry");
}

}  // namespace

FetchOptions fetch_options_from_env(FetchOptions options) {
  if (const char* url = std::getenv(kOmniUrlEnv); url && *url) options.url_template = url;
  if (const char* dir = std::getenv(kCacheDirEnv); dir && *dir) options.cache_dir = dir;
  return options;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

FetchResult fetch_omni(HourStamp start, HourStamp end, const FetchOptions& options) {
  if (!(start < end)) throw RangeError("empty date range " + start.iso() + " .. " + end.iso());
  std::error_code ec;
  fs::create_directories(options.cache_dir, ec);
  if (ec) throw IoError("cannot create cache directory '" + options.cache_dir + "': " + ec.message());

  FetchResult result;
  std::string rows;
  const int last_year = (end + (-1)).year();
  for (int year = start.year(); year <= last_year; ++year) {
    const fs::path file = fs::path(options.cache_dir) / ("omni2_" + std::to_string(year) + ".dat");
    const fs::path sidecar = file.string() + ".sha256";
    std::string body;
    if (fs::exists(file) && fs::exists(sidecar)) {
      body = read_file(file);
      std::string expected = read_file(sidecar);
      while (!expected.empty() && std::isspace(static_cast<unsigned char>(expected.back()))) expected.pop_back();
      if (sha256_hex(body) != expected) {
        throw CacheInvalidError("cached file '" + file.string() + "' does not match its checksum; delete it to re-download");
      }
      ++result.cache_hits;
    } else {
      body = download(year_url(options.url_template, year), options);
      write_file(file, body);
      write_file(sidecar, sha256_hex(body) + "\n");
      ++result.downloads;
    }
    std::istringstream in(body);
    for (std::string line; std::getline(in, line);) {
      std::istringstream fields(line);
      int y = 0;
      unsigned doy = 0, hour = 0;
      if (!(fields >> y >> doy >> hour)) continue;
      if (doy < 1 || doy > 366 || hour > 23) continue;
      const HourStamp t = HourStamp::from_day_of_year(y, doy, hour);
      if (start <= t && t < end) rows += line + "\n";
    }
  }
  auto stamp = [](HourStamp t) {
    std::string s = t.iso().substr(0, 13);  // YYYY-MM-DDTHH
    s.erase(std::remove(s.begin(), s.end(), '-'), s.end());
    return s;
  };
  const fs::path out = fs::path(options.cache_dir) / ("omni2_" + stamp(start) + "_" + stamp(end) + ".dat");
  write_file(out, rows);
  result.path = out.string();
  return result;
}

}  // namespace dstt::data
