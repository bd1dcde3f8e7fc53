#pragma once

// Download client for the yearly OMNI2 hourly files, with a local cache.
// Each cached file has a .sha256 sidecar that is checked on reuse.

#include <cstddef>
#include <string>

#include "dstt/time.hpp"

namespace dstt::data {

inline constexpr const char* kDefaultOmniUrl =
    "https://spdf.gsfc.nasa.gov/pub/data/omni/low_res_omni/omni2_{year}.dat";
inline constexpr const char* kOmniUrlEnv = "DSTT_OMNI_URL";
inline constexpr const char* kCacheDirEnv = "DSTT_CACHE_DIR";

struct FetchOptions {
  /// "{year}" is replaced by the four-digit year.
  std::string url_template = kDefaultOmniUrl;
  std::string cache_dir = "omni_cache";
  int retries = 2;
  int timeout_seconds = 60;
};

/// Applies the environment overrides on top of `options`.
FetchOptions fetch_options_from_env(FetchOptions options);

struct FetchResult {
  std::string path;               // rows of [start, end) only
  std::size_t downloads = 0;      // files fetched over the network
  std::size_t cache_hits = 0;
};

/// Rows for hours in [start, end). RangeError when the range is empty,
/// FetchError on network or HTTP failure, CacheInvalidError when a cached
/// file no longer matches its checksum.
FetchResult fetch_omni(HourStamp start, HourStamp end, const FetchOptions& options);

std::string sha256_hex(const std::string& bytes);

}  // namespace dstt::data
