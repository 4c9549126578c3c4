use super::DataError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Binary classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Adl,
    Fall,
}

impl Category {
    /// Class index used by the models: ADL is 0, fall is 1.
    pub fn class_index(self) -> usize {
        match self {
            Category::Adl => 0,
            Category::Fall => 1,
        }
    }
}

/// Scripted activity codes covered by the monitoring protocol.
///
/// Fourteen activities of daily living and five fall types. Each code maps
/// to a fixed category, so window labels follow directly from annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivityLabel {
    /// Stand straight.
    Sta,
    /// Sit on bed.
    Sob,
    /// Sit on chair.
    Soc,
    /// Lie on bed.
    Lob,
    /// Lie on ground.
    Log,
    /// Walk.
    Wlk,
    /// Sit down on chair.
    Sdc,
    /// Stand up from chair.
    Suc,
    /// Sit up in bed.
    Seb,
    /// Get out of bed.
    Tob,
    /// Lie down in bed.
    Ldb,
    /// Roll in bed, either direction.
    Rib,
    /// Transfer between bed and chair.
    Tfr,
    /// Stand up from ground.
    Sug,
    /// Fall while getting out of bed.
    Fob,
    /// Fall while transferring.
    Ftr,
    /// Fall while standing.
    Fst,
    /// Fall while sitting up.
    Fsu,
    /// Fall while turning.
    Ftu,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 19] = [
        ActivityLabel::Sta,
        ActivityLabel::Sob,
        ActivityLabel::Soc,
        ActivityLabel::Lob,
        ActivityLabel::Log,
        ActivityLabel::Wlk,
        ActivityLabel::Sdc,
        ActivityLabel::Suc,
        ActivityLabel::Seb,
        ActivityLabel::Tob,
        ActivityLabel::Ldb,
        ActivityLabel::Rib,
        ActivityLabel::Tfr,
        ActivityLabel::Sug,
        ActivityLabel::Fob,
        ActivityLabel::Ftr,
        ActivityLabel::Fst,
        ActivityLabel::Fsu,
        ActivityLabel::Ftu,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ActivityLabel::Sta => "STA",
            ActivityLabel::Sob => "SOB",
            ActivityLabel::Soc => "SOC",
            ActivityLabel::Lob => "LOB",
            ActivityLabel::Log => "LOG",
            ActivityLabel::Wlk => "WLK",
            ActivityLabel::Sdc => "SDC",
            ActivityLabel::Suc => "SUC",
            ActivityLabel::Seb => "SEB",
            ActivityLabel::Tob => "TOB",
            ActivityLabel::Ldb => "LDB",
            ActivityLabel::Rib => "RIB",
            ActivityLabel::Tfr => "TFR",
            ActivityLabel::Sug => "SUG",
            ActivityLabel::Fob => "FOB",
            ActivityLabel::Ftr => "FTR",
            ActivityLabel::Fst => "FST",
            ActivityLabel::Fsu => "FSU",
            ActivityLabel::Ftu => "FTU",
        }
    }

    /// Human-readable protocol descriptions. RIB covers rolling in bed in
    /// both directions, so it carries two.
    pub fn descriptions(self) -> &'static [&'static str] {
        match self {
            ActivityLabel::Sta => &["standing still"],
            ActivityLabel::Sob => &["sitting on the bed"],
            ActivityLabel::Soc => &["sitting on the chair"],
            ActivityLabel::Lob => &["lying on the bed"],
            ActivityLabel::Log => &["lying on the ground"],
            ActivityLabel::Wlk => &["walking around the room"],
            ActivityLabel::Sdc => &["sitting down on the chair"],
            ActivityLabel::Suc => &["standing up from the chair"],
            ActivityLabel::Seb => &["sitting up in bed"],
            ActivityLabel::Tob => &["getting out of bed"],
            ActivityLabel::Ldb => &["lying down in bed"],
            ActivityLabel::Rib => &[
                "rolling in bed towards the sensor",
                "rolling in bed away from the sensor",
            ],
            ActivityLabel::Tfr => &["transferring between the bed and the chair"],
            ActivityLabel::Sug => &["standing up from the ground"],
            ActivityLabel::Fob => &["falling while getting out of bed"],
            ActivityLabel::Ftr => &["falling while transferring"],
            ActivityLabel::Fst => &["falling while standing"],
            ActivityLabel::Fsu => &["falling while sitting up"],
            ActivityLabel::Ftu => &["falling while turning"],
        }
    }

    pub fn category(self) -> Category {
        match self {
            ActivityLabel::Fob
            | ActivityLabel::Ftr
            | ActivityLabel::Fst
            | ActivityLabel::Fsu
            | ActivityLabel::Ftu => Category::Fall,
            _ => Category::Adl,
        }
    }

    pub fn is_fall(self) -> bool {
        self.category() == Category::Fall
    }

    pub fn adl_codes() -> impl Iterator<Item = ActivityLabel> {
        Self::ALL.iter().copied().filter(|l| !l.is_fall())
    }

    pub fn fall_codes() -> impl Iterator<Item = ActivityLabel> {
        Self::ALL.iter().copied().filter(|l| l.is_fall())
    }
}

impl FromStr for ActivityLabel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.code() == s)
            .ok_or_else(|| DataError::UnknownCode {
                code: s.to_string(),
            })
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_counts() {
        assert_eq!(ActivityLabel::ALL.len(), 19);
        assert_eq!(ActivityLabel::adl_codes().count(), 14);
        assert_eq!(ActivityLabel::fall_codes().count(), 5);
    }

    #[test]
    fn codes_roundtrip() {
        for label in ActivityLabel::ALL {
            assert_eq!(label.code().parse::<ActivityLabel>().unwrap(), label);
        }
    }

    #[test]
    fn categories_match_prefix() {
        assert_eq!("FTR".parse::<ActivityLabel>().unwrap().category(), Category::Fall);
        assert_eq!("WLK".parse::<ActivityLabel>().unwrap().category(), Category::Adl);
        assert_eq!("LOG".parse::<ActivityLabel>().unwrap().category(), Category::Adl);
    }

    #[test]
    fn unknown_code_rejected() {
        assert!(matches!(
            "XYZ".parse::<ActivityLabel>(),
            Err(DataError::UnknownCode { .. })
        ));
    }

    #[test]
    fn rib_carries_both_directions() {
        assert_eq!(ActivityLabel::Rib.descriptions().len(), 2);
        let total: usize = ActivityLabel::ALL
            .iter()
            .map(|l| l.descriptions().len())
            .sum();
        assert_eq!(total, 20);
    }
}
