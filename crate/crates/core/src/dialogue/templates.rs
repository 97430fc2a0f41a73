//! Dialogue-generation prompt templates.

use crate::cohort::ImageCaseRecord;

/// Open-form template. Placeholders: `{age} {sex} {diab} {smk} {lateamd} {drus} {pig}`.
pub const OPEN_TEMPLATE: &str = r#"You are a highly experienced ophthalmologist specializing in retinal diseases, having a conversation with a patient during a clinic visit. The patient has the following information:

- Age: {age}
- Sex: {sex} (0 = female, 1 = male)
- Diabetes: {diab} (0 = No, 1 = Yes)
- Smoker: {smk} (1 = current, 2 = former, 3 = never)

And you have patient's exam results:

- Late Age-related Macular Degeneration (advanced AMD): {lateamd} (0 = No, 1 = Yes)
- Drusen Size (DRUS): {drus} (0 = small/none, 1 = intermediate, 2 = large)
- Pigmentary (PIG): {pig} (0 = No, 1 = Yes)

Simulate a natural and concise multi-turn conversation between the patient and doctor around these topics, ensuring medical professionalism and coherence. The patient demographics information should be contained in conversation.

Respond only with a JSON array of short dialog turns in the following format:

[
  {"role": "patient", "text": "<question>"},
  {"role": "doctor", "text": "<answer>"}
]

Include 3 turns, each turn should be a questioning and answering about the exam results. Each turn should contain one of the exam results, and 3-turn dialogues must involve all of exam result.

Avoid repeating irrelevant information, no explanation and compliment required and keep the tone professional and context-aware."#;

/// JSON-form template. It has no placeholders; case data is appended as [`JSON_CASE_BLOCK`].
pub const JSON_TEMPLATE: &str = r#"You are a highly experienced ophthalmologist specializing in retinal diseases. Now you are a dialogue creator specializing in generating question-and-answer sets.

You need to simulate a natural question and answering between the patient and doctor only surrounding the exam results. The patient does not know any exam results in advance and no clinical background. please ensure medical professionalism and coherence. Respond only with a JSON format of short dialog turns in the following format:

[
  {"role": "human", "text": "<question>"},
  {"role": "gpt", "text": "<answer>"}
]

Please create three turns question-and-answer sets, and let the question turns randomly. The questions must be variety, be definitely inspected from the retinal image, and each question include at least one exam result.

The questions must include a sentence that prompt the answer output in JSON format. Then, the generated answers should be JSON format, for example:

- advanced AMD: 1 if late age-related macular degeneration is present, otherwise 0
- PIG: 1 if abnormal pigmentary is present, otherwise 0
- DRUS: 0 if no drusen or small drusen, 1 if intermediate drusen, 2 if large drusen If the answer includes more than one item, plug a space between

If the answer includes more than one item, plug a space between the two items.

Avoid any associations, interpretations, clinical recommendations and repeating irrelevant information. Here are the patient's basic information and exam results for you to get information about ophthalmology diagnosis."#;

/// Case data appended to the JSON-form template, reusing the open-form legends.
pub const JSON_CASE_BLOCK: &str = r#"

- Age: {age}
- Sex: {sex} (0 = female, 1 = male)
- Diabetes: {diab} (0 = No, 1 = Yes)
- Smoker: {smk} (1 = current, 2 = former, 3 = never)
- Late Age-related Macular Degeneration (advanced AMD): {lateamd} (0 = No, 1 = Yes)
- Drusen Size (DRUS): {drus} (0 = small/none, 1 = intermediate, 2 = large)
- Pigmentary (PIG): {pig} (0 = No, 1 = Yes)"#;

/// Substitutes every placeholder with the record's integer codes.
pub fn fill(template: &str, record: &ImageCaseRecord) -> String {
    let d = &record.demographics;
    let l = &record.labels;
    template
        .replace("{age}", &d.age.to_string())
        .replace("{sex}", &d.sex.to_string())
        .replace("{diab}", &d.diabetes.to_string())
        .replace("{smk}", &d.smoking.to_string())
        .replace("{lateamd}", &l.advamd.to_string())
        .replace("{drus}", &l.drus.to_string())
        .replace("{pig}", &l.pig.to_string())
}
