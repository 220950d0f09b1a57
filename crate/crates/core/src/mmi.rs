//! The twelve-level Modified Mercalli Intensity scale.

use serde::{Deserialize, Serialize};

const ROMAN: [&str; 12] = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"];

/// USGS abbreviated descriptors, levels I through XII.
pub const DESCRIPTORS: [&str; 12] = [
    "Not felt except by a very few under especially favorable conditions.",
    "Felt only by a few persons at rest, especially on upper floors of buildings. Delicately suspended objects may swing.",
    "Felt quite noticeably by persons indoors, especially on upper floors of buildings. Many people do not recognize it as an earthquake. Standing motor cars may rock slightly. Vibration similar to the passing of a truck. Duration estimated.",
    "Felt indoors by many, outdoors by few during the day. At night, some awakened. Dishes, windows, doors disturbed; walls make cracking sound. Sensation like heavy truck striking building. Standing motor cars rocked noticeably.",
    "Felt by nearly everyone; many awakened. Some dishes, windows broken. Unstable objects overturned. Pendulum clocks may stop.",
    "Felt by all, many frightened. Some heavy furniture moved; a few instances of fallen plaster. Damage slight.",
    "Damage negligible in buildings of good design and construction; slight to moderate in well-built ordinary structures; considerable damage in poorly built or badly designed structures; some chimneys broken.",
    "Damage slight in specially designed structures; considerable damage in ordinary substantial buildings with partial collapse. Damage great in poorly built structures. Fall of chimneys, factory stacks, columns, monuments, walls. Heavy furniture overturned.",
    "Damage considerable in specially designed structures; well-designed frame structures thrown out of plumb. Damage great in substantial buildings, with partial collapse. Buildings shifted off foundations.",
    "Some well-built wooden structures destroyed; most masonry and frame structures destroyed with foundations. Rail bent.",
    "Few, if any (masonry) structures remain standing. Bridges destroyed. Rails bent greatly.",
    "Damage total. Lines of sight and level are distorted. Objects thrown into the air.",
];

/// An intensity level in I..=XII. Serialized as its Roman numeral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MmiLevel(u8);

impl MmiLevel {
    pub const MIN: MmiLevel = MmiLevel(1);
    pub const MAX: MmiLevel = MmiLevel(12);

    pub fn new(value: u8) -> Option<Self> {
        (1..=12).contains(&value).then_some(Self(value))
    }

    /// Exact (case-insensitive) Roman numeral.
    pub fn from_roman(s: &str) -> Option<Self> {
        let upper = s.trim().to_ascii_uppercase();
        ROMAN.iter().position(|r| *r == upper).map(|i| Self(i as u8 + 1))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn roman(self) -> &'static str {
        ROMAN[self.0 as usize - 1]
    }

    pub fn descriptor(self) -> &'static str {
        DESCRIPTORS[self.0 as usize - 1]
    }

    pub fn all() -> impl Iterator<Item = MmiLevel> {
        (1..=12).map(MmiLevel)
    }
}

impl std::fmt::Display for MmiLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.roman())
    }
}

impl TryFrom<String> for MmiLevel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        MmiLevel::from_roman(&s).ok_or_else(|| format!("not an MMI level: {s:?}"))
    }
}

impl From<MmiLevel> for String {
    fn from(m: MmiLevel) -> String {
        m.roman().to_string()
    }
}

/// The full scale as one line per level, ascending.
pub fn mmi_scale_text() -> String {
    MmiLevel::all()
        .map(|m| format!("- MMI {}: {}", m.roman(), m.descriptor()))
        .collect::<Vec<_>>()
        .join("\n")
}
