"""The eight locomotion biomes and their material make-up.

Each biome pairs a base terrain boundary condition with an optional
particulate cover layer (sand, mud, clay, snow) and an optional water
fill. Desert, Clay, and Snow share the elastoplastic family and differ
only in parameters (friction cone, stiffness, clamp thresholds); Ground
and Ice differ only in the contact condition. Depths and water levels are
desk-scale defaults over the unit box and are config-exposed.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .state import Material, MaterialParams


@dataclass(frozen=True)
class BiomeSpec:
    """Terrain condition plus optional cover material and water fill.

    cover_depth is measured upward from the local terrain surface;
    water_depth is measured upward from the terrain's base height, so the
    water surface is flat at base + water_depth.
    """

    name: str
    bc: str = "sticky"
    friction: float = 0.5
    cover: MaterialParams | None = None
    cover_depth: float = 0.0
    water_depth: float | None = None

    @property
    def has_cover(self) -> bool:
        return self.cover is not None and self.cover_depth > 0.0

    @property
    def has_water(self) -> bool:
        return self.water_depth is not None and self.water_depth > 0.0


def _granular(E, nu, friction_angle):
    mat = MaterialParams.from_young_poisson(Material.SAND, E, nu)
    return MaterialParams(Material.SAND, mu=mat.mu, lam=mat.lam,
                          friction_angle=friction_angle)


def _snow(E=1.4e4, nu=0.2):
    mat = MaterialParams.from_young_poisson(Material.SNOW, E, nu)
    return mat


def _water(bulk=1e4):
    return MaterialParams(Material.FLUID, bulk=bulk, gamma=7.0)


BIOMES = {
    # rigid terrain, high-friction contact modeled as sticky
    "Ground": BiomeSpec("Ground", bc="sticky"),
    # granular cover, wide friction cone
    "Desert": BiomeSpec("Desert", bc="sticky",
                        cover=_granular(1e4, 0.3, friction_angle=40.0),
                        cover_depth=0.06),
    # soft mud (narrow cone, soft) partially submerged in water
    "Wetland": BiomeSpec("Wetland", bc="sticky",
                         cover=_granular(3e3, 0.35, friction_angle=25.0),
                         cover_depth=0.05, water_depth=0.08),
    # cohesive plastic cover: narrow friction cone, stiffer than mud
    "Clay": BiomeSpec("Clay", bc="sticky",
                      cover=_granular(8e3, 0.35, friction_angle=15.0),
                      cover_depth=0.05),
    # rigid terrain, low-friction Coulomb contact
    "Ice": BiomeSpec("Ice", bc="friction", friction=0.02),
    # elastoplastic snow cover
    "Snow": BiomeSpec("Snow", bc="sticky", cover=_snow(), cover_depth=0.06),
    "ShallowWater": BiomeSpec("ShallowWater", bc="sticky", water_depth=0.06),
    "Ocean": BiomeSpec("Ocean", bc="sticky", water_depth=0.5),
}


def get_biome(name: str) -> BiomeSpec:
    try:
        return BIOMES[name]
    except KeyError:
        raise ConfigError(
            f"unknown biome {name!r}; expected one of {sorted(BIOMES)}") from None
