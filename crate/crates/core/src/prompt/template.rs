//! Template text and a `str.format`-style substituter: `{name}` is replaced,
//! `{{` and `}}` are literal braces, and any unknown name is an error.

use std::collections::BTreeMap;

use super::PromptError;

pub const SYSTEM_PROMPT: &str = "You are a seismic expert specialized in earthquake damage assessment and disaster response. You analyze earthquake data, local conditions, and building characteristics to provide damage assessments using the Modified Mercalli Intensity (MMI) scale.";

pub const HEADER: &str = "\
The earthquake happened date is {event_date}. 

Here is the EARTHQUAKE information. 
- Epicenter: {eq_place}
- Coordinates: {eq_lat}, {eq_lng}
- Magnitude: {eq_magnitude} mw
- Depth: {eq_depth} km

YOUR LOCATION information is listed below. 
- State: {state}
- City: {city}
- Zipcode: {zipcode}
- Coordinates: {lat}, {lng}
- Distance from epicenter: {distance} km

";

pub const GEOSPATIAL: &str = "\
## Geospatial features in YOUR LOCATION
- VS30 at your location: {vs30} m/s 
(VS30 represents the time-averaged shear-wave velocity (VS) to a depth of 30 meters, which is a key index to account for seismic site conditions)

";

pub const BUILDING: &str = "\
## Building Description in YOUR LOCATION (within a 100-meter radius)
- Building description: {building} 

";

pub const SOCIOECONOMIC: &str = "\
## Community Socioecnomics and Demographics in YOUR LOCATION (at Cencus Block Group level)
- Population density: {population_density} people per square km
- Urban population percentage: {urban_population_pct}%
- Over 65 percentage: {over_65_rate}%
- Median household income: ${median_household_income}/year
- Education (bachelor's or higher): {education}%

";

pub const VISUAL: &str = "\
## Visual Context in YOUR LOCATION
The image provided shows your surrounding environment and infrastructure. 

";

pub const REFERENCE_HEADER: &str = "\
## Reference Cases
Reported MMI at past locations with similar features:
";

pub const ASSESSMENT: &str = "\
Based on the information provided, ASSESS the potential earthquake damage level using the Modified Mercalli Intensity (MMI) scale.
1. Identify the damage level.
2. Explain your reasoning by addressing the following factors and considering the visual context. 
   - Distance to the epicenter and earthquake magnitude
   - Geospatial features
   - Infrastructure quality and building characteristics
   - Population density and socioeconomic vulnerabilities
   - Visual image of surroundings

The following is an abbreviated description of the 12 levels of Modified Mercalli intensity. {MMI Scale}

Output the result in JSON format:
{{
    \"Reasoning\": \"<Provide reasoning>\"
    \"MMI\": \"<Respond MMI level>\",
}}
";

/// Used for `{MMI Scale}` when the full guide is not embedded.
pub const MMI_RANGE_LINE: &str = "Respond with a single level from I to XII.";

pub fn substitute(template: &str, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("{{") {
            out.push('{');
            rest = &tail[2..];
        } else if tail.starts_with("}}") {
            out.push('}');
            rest = &tail[2..];
        } else if tail.starts_with('}') {
            return Err(PromptError::Template(format!("stray '}}' at byte {}", template.len() - tail.len())));
        } else {
            let end = tail
                .find('}')
                .ok_or_else(|| PromptError::Template("unterminated placeholder".into()))?;
            let name = &tail[1..end];
            let value = values
                .get(name)
                .ok_or_else(|| PromptError::Unresolved(name.to_string()))?;
            out.push_str(value);
            rest = &tail[end + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}
