use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Privacy category assigned to a photo by the classifier.
///
/// Codes are fixed: public = 1, photo_id = 2, legal_document = 3,
/// family = 4, nude = 5. Every category except `Public` is private.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentCategory {
    Public,
    PhotoId,
    LegalDocument,
    Family,
    Nude,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CategoryError {
    #[error("category code {0} is outside 1..=5")]
    BadCode(i64),
    #[error("unknown category label {0:?}")]
    BadLabel(String),
}

impl ContentCategory {
    pub const COUNT: usize = 5;

    /// All categories in code order.
    pub const ALL: [ContentCategory; 5] = [
        ContentCategory::Public,
        ContentCategory::PhotoId,
        ContentCategory::LegalDocument,
        ContentCategory::Family,
        ContentCategory::Nude,
    ];

    pub fn code(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Zero-based position, used as the row/column index of model outputs.
    pub fn index(self) -> usize {
        match self {
            Self::Public => 0,
            Self::PhotoId => 1,
            Self::LegalDocument => 2,
            Self::Family => 3,
            Self::Nude => 4,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn from_code(code: i64) -> Result<Self, CategoryError> {
        if (1..=5).contains(&code) {
            Ok(Self::ALL[(code - 1) as usize])
        } else {
            Err(CategoryError::BadCode(code))
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Public => "public",
            Self::PhotoId => "photo_id",
            Self::LegalDocument => "legal_document",
            Self::Family => "family",
            Self::Nude => "nude",
        }
    }

    /// Human readable name shown in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Public => "Public",
            Self::PhotoId => "Photo ID",
            Self::LegalDocument => "Legal Document",
            Self::Family => "Family",
            Self::Nude => "Nude",
        }
    }

    pub fn is_private(self) -> bool {
        self != Self::Public
    }
}

impl fmt::Display for ContentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ContentCategory {
    type Err = CategoryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.label() == lowered)
            .ok_or_else(|| CategoryError::BadLabel(s.to_string()))
    }
}
