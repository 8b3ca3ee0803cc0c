"""Geographic primitives: distances, location sets, solar-noon scheduling,
the latecomer window and urban-density arithmetic.

Location files are CSV with a header row and the columns ``id,lat,lon``
(degrees, WGS84 coordinates treated as spherical).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidLocations, SingletonSet

EARTH_RADIUS_KM = 6371.0
MIN_SPACING_M = 10.0
SECONDS_PER_DEGREE = 240.0  # 86400 s / 360 deg


@dataclass(frozen=True)
class Location:
    id: str
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidLocations(f"latitude out of range for {self.id!r}: {self.lat}")
        if not -180.0 < self.lon <= 180.0:
            raise InvalidLocations(f"longitude out of range for {self.id!r}: {self.lon}")


def _unit_vectors(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    la, lo = np.radians(lats), np.radians(lons)
    return np.column_stack((np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)))


def _haversine_km(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def distance(a: Location, b: Location) -> float:
    """Great-circle distance in km (haversine, spherical earth)."""
    la1, lo1, la2, lo2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


@dataclass(frozen=True)
class LocationSet:
    """The ordered set of possible meetup locations of one currency.

    Construction validates id uniqueness and the minimum spacing between any
    two members. Per-location nearest-neighbour distances are memoized, since
    the simulator asks for the same latecomer window many times.
    """

    locations: tuple[Location, ...]
    min_spacing_m: float = MIN_SPACING_M
    _nearest: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _coords: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "locations", tuple(self.locations))
        coords = np.array([(l.lat, l.lon) for l in self.locations], dtype=float).reshape(-1, 2)
        coords.setflags(write=False)
        object.__setattr__(self, "_coords", coords)
        if not self.locations:
            raise InvalidLocations("a location set needs at least one location")
        for i, loc in enumerate(self.locations):
            if loc.id in self._index:
                raise InvalidLocations(f"duplicate location id {loc.id!r}")
            self._index[loc.id] = i
        if len(self.locations) > 1 and self.min_spacing_m > 0:
            pts = _unit_vectors(self.lats, self.lons)
            # chord length equivalent of the spacing on the unit sphere
            chord = 2 * math.sin(self.min_spacing_m / 1000.0 / (2 * EARTH_RADIUS_KM))
            pairs = cKDTree(pts).query_pairs(chord * (1 + 1e-9), output_type="ndarray")
            for i, j in pairs:
                a, b = self.locations[i], self.locations[j]
                if distance(a, b) * 1000.0 < self.min_spacing_m:
                    raise InvalidLocations(
                        f"locations {a.id!r} and {b.id!r} closer than {self.min_spacing_m} m"
                    )

    @property
    def lats(self) -> np.ndarray:
        return self._coords[:, 0]

    @property
    def lons(self) -> np.ndarray:
        return self._coords[:, 1]

    def __len__(self) -> int:
        return len(self.locations)

    def __iter__(self):
        return iter(self.locations)

    def __getitem__(self, i: int) -> Location:
        return self.locations[i]

    def __contains__(self, loc: object) -> bool:
        return isinstance(loc, Location) and self._index.get(loc.id) is not None and (
            self.locations[self._index[loc.id]] == loc
        )

    def by_id(self, loc_id: str) -> Location:
        return self.locations[self._index[loc_id]]


def min_pairwise_distance(locations: LocationSet, at: Location) -> float:
    """Distance in km from ``at`` to its nearest other member of the set."""
    if len(locations) < 2:
        raise SingletonSet("latecomer window undefined for a single-location set")
    if at not in locations:
        raise InvalidLocations(f"{at.id!r} is not a member of the location set")
    if not locations._nearest:
        # nearest by chord is nearest by great circle, so one k=2 query serves all
        lats, lons = locations.lats, locations.lons
        _, idx = cKDTree(_unit_vectors(lats, lons)).query(_unit_vectors(lats, lons), k=2)
        other = np.where(idx[:, 0] == np.arange(len(lats)), idx[:, 1], idx[:, 0])
        d = _haversine_km(lats, lons, lats[other], lons[other])
        locations._nearest.update(zip((l.id for l in locations.locations), d.tolist()))
    return locations._nearest[at.id]


@dataclass(frozen=True)
class TimingParams:
    v_max_kmh: float = 300.0
    meetup_interval_days: int = 41
    registration_close_offset_h: float = 24.0
    witnessing_window_h: float = 24.0

    def __post_init__(self) -> None:
        for name in ("v_max_kmh", "meetup_interval_days", "registration_close_offset_h", "witnessing_window_h"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def time_window(locations: LocationSet, at: Location, params: TimingParams = TimingParams()) -> float:
    """Latecomer window in seconds: nearest-neighbour distance over v_max."""
    return min_pairwise_distance(locations, at) / params.v_max_kmh * 3600.0


def solar_noon(loc: Location, day: date) -> datetime:
    """Mean solar noon at the location's longitude, as an aware UTC datetime."""
    noon = datetime.combine(day, time(12, 0), tzinfo=timezone.utc)
    return noon - timedelta(seconds=loc.lon * SECONDS_PER_DEGREE)


@dataclass(frozen=True)
class UrbanCapacity:
    meetups_per_km2: float
    area_per_meetup_m2: float
    spacing_m: float


def urban_capacity(pop_density: float, meetup_size: float) -> UrbanCapacity:
    if pop_density <= 0 or meetup_size <= 0:
        raise ValueError("density and meetup size must be positive")
    per_km2 = pop_density / meetup_size
    area = 1e6 / per_km2
    return UrbanCapacity(per_km2, area, math.sqrt(area))


def load_locations(path: str | Path, min_spacing_m: float = MIN_SPACING_M) -> LocationSet:
    """Read a ``id,lat,lon`` CSV file into a validated LocationSet."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "lat", "lon"} <= set(reader.fieldnames):
            raise InvalidLocations(f"{path}: expected columns id,lat,lon")
        try:
            locs = [Location(row["id"], float(row["lat"]), float(row["lon"])) for row in reader]
        except (TypeError, ValueError) as exc:
            raise InvalidLocations(f"{path}: {exc}") from exc
    return LocationSet(tuple(locs), min_spacing_m)


def write_locations(locations: Iterable[Location], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon"])
        for loc in locations:
            w.writerow([loc.id, repr(loc.lat), repr(loc.lon)])


def grid_locations(
    count: int, center: Sequence[float] = (47.3769, 8.5417), spacing_m: float = 50.0, prefix: str = "L"
) -> LocationSet:
    """A square lattice of ``count`` locations around ``center`` (lat, lon).

    Used to synthesize location sets for scenarios; longitudinal spacing is
    corrected for latitude so neighbours stay ``spacing_m`` apart.
    """
    side = math.ceil(math.sqrt(count))
    dlat = math.degrees(spacing_m / 1000.0 / EARTH_RADIUS_KM)
    dlon = dlat / math.cos(math.radians(center[0]))
    lat0 = center[0] - dlat * (side - 1) / 2
    lon0 = center[1] - dlon * (side - 1) / 2
    locs = []
    for k in range(count):
        r, c = divmod(k, side)
        locs.append(Location(f"{prefix}{k:06d}", round(lat0 + r * dlat, 9), round(lon0 + c * dlon, 9)))
    return LocationSet(tuple(locs))
