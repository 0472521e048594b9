#pragma once

#include <stdexcept>
#include <string>

namespace rangemap::geo {

/// Geodesy on the reference ellipsoid and conversion between global
/// coordinates and a local east-north-up frame.
///
/// Azimuth convention: degrees clockwise from true north, in [0, 360).
/// For coincident points both azimuths are reported as 0.

struct GeoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Vincenty iteration failed to converge (nearly antipodal points).
struct NonConvergence : GeoError {
  using GeoError::GeoError;
};

/// Point outside the validity radius of the local ENU approximation.
struct OutOfRange : GeoError {
  using GeoError::GeoError;
};

struct Ellipsoid {
  double semi_major_axis;  // meters
  double flattening;       // dimensionless

  double semi_minor_axis() const { return semi_major_axis * (1.0 - flattening); }

  static Ellipsoid wgs84() { return {6378137.0, 1.0 / 298.257223563}; }
};

struct GeoCoordinate {
  double latitude;   // degrees, [-90, 90]
  double longitude;  // degrees, (-180, 180]
  double height;     // meters above the ellipsoid

  /// Throws GeoError when a field is outside its documented range.
  void validate() const;
};

struct LocalPoint {
  double east = 0.0;
  double north = 0.0;
  double up = 0.0;

  LocalPoint operator+(const LocalPoint& o) const { return {east + o.east, north + o.north, up + o.up}; }
  LocalPoint operator-(const LocalPoint& o) const { return {east - o.east, north - o.north, up - o.up}; }
  LocalPoint operator*(double s) const { return {east * s, north * s, up * s}; }
  double norm() const;
  double horizontal_norm() const;
};

/// Local east-north-up frame anchored at a surveyed origin.
struct LocalFrame {
  GeoCoordinate origin;

  /// Maximum horizontal distance (meters) at which the ENU small-angle
  /// conversion is accepted.
  static constexpr double kValidityRadius = 10'000.0;
};

struct InverseResult {
  double distance;         // geodesic distance, meters
  double forward_azimuth;  // at the first point, degrees in [0, 360)
  double reverse_azimuth;  // at the second point, degrees in [0, 360)
};

/// Geodesic distance and azimuths between two points (Vincenty inverse).
/// The computation path is symmetric: swapping a and b yields exactly the
/// same distance. Throws NonConvergence for nearly antipodal pairs.
InverseResult vincenty_inverse(const GeoCoordinate& a, const GeoCoordinate& b,
                               const Ellipsoid& e = Ellipsoid::wgs84());

/// Destination point given start, initial azimuth (degrees clockwise from
/// north) and geodesic distance (Vincenty direct). Height is carried over
/// from the start point.
GeoCoordinate vincenty_direct(const GeoCoordinate& a, double azimuth_deg,
                              double distance_m,
                              const Ellipsoid& e = Ellipsoid::wgs84());

/// Global -> local ENU via geodesic distance/azimuth decomposition.
/// Throws OutOfRange beyond LocalFrame::kValidityRadius.
LocalPoint geo_to_local(const LocalFrame& frame, const GeoCoordinate& p,
                        const Ellipsoid& e = Ellipsoid::wgs84());

/// Local ENU -> global; inverse of geo_to_local.
GeoCoordinate local_to_geo(const LocalFrame& frame, const LocalPoint& q,
                           const Ellipsoid& e = Ellipsoid::wgs84());

}  // namespace rangemap::geo
