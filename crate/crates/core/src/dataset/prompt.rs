//! Few-shot summarization prompt builder. The worked examples are fixed;
//! only the trailing query block varies per record.

use super::ImagePairRecord;
use crate::error::{Error, Result};

/// The fixed header and three worked examples, ending with a newline so a
/// query block can be appended directly.
pub const FEWSHOT_TEMPLATE: &str = "\
Given descriptions of two images and the edit task, summarize the change between them:
Example 1:
Image 1: An abstract oil painting of a landscape at sunset. A sea and a single tree in the foreground and a hill in the background.
Image 2: An abstract oil painting of a landscape at night. A sea and a single tree in the foreground and a hill in the background.
Edit: Change the time of day from sunset to night.
Summary: Time of day is changed from sunset to night. The sun is removed and there is no more orange and purple colors. Instead, the moon is casting a white light reflected in the sea.
Example 2:
Image 1: One Of The Best Wet Street Scenes In Watercolor I Have Seen
Image 2: One Of The Best Wet Street Scenes In Charcoal I Have Seen
Edit: Change the image style to charcoal drawing
Summary: The style of the image is changed from a watercolor to a charcoal drawing.
Example 3:
Image 1: Woman Eating Spaghetti In Restaurant 5 Photograph by Alfred Eisenstaedt
Image 2: Woman Eating Soup In Restaurant 5 Photograph by Alfred Eisenstaedt
Edit: Substitute the spaghetti with a soup.
Summary: The spaghetti has been replaced by soup.
";

/// Renders the full prompt for one record: template, then the record's
/// captions and instruction, ending with `Summary:` and no trailing space.
pub fn build_fewshot_prompt(record: &ImagePairRecord) -> Result<String> {
    let mut missing = Vec::new();
    for (field, value) in [
        ("caption_src", &record.caption_src),
        ("caption_edit", &record.caption_edit),
        ("edit_instruction", &record.edit_instruction),
    ] {
        if value.trim().is_empty() {
            missing.push(format!("record '{}': empty {field}", record.id));
        }
    }
    if !missing.is_empty() {
        return Err(Error::ManifestValidation(missing));
    }
    Ok(format!(
        "{FEWSHOT_TEMPLATE}Image 1: {}\nImage 2: {}\nEdit: {}\nSummary:",
        record.caption_src, record.caption_edit, record.edit_instruction
    ))
}
