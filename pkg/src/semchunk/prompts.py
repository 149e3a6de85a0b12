"""Prompt texts sent to the conversion, answering, and judging endpoints."""

OCR_PROMPT = r"""You are a powerful OCR assistant tasked with converting PDF images to the Markdown format. You MUST obey the following criteria:
1. Plain text processing:
- Accurately recognize all text content in the PDF image without guessing or inferring.
- Precisely recognize all text in the PDF image without making assumptions in the Markdown format.
- Maintain the original document structure, including headings, paragraphs, lists, etc.
2. Formula Processing:
- Convert all formulas to LaTeX.
- Enclose inline formulas with $ $. For example: This is an inline formula $ E = mc^2 $.
- Enclose block formulas with $$ $$. For example: $$ \frac{-b \pm \sqrt{b^2 - 4ac}}{2a} $$.
3. Table Processing:
- Convert all tables to LaTeX format.
- Enclose the tabular data with \begin{table} \end{table}.
4. Chart Processing:
- Convert all Charts to LaTeX format.
- Enclose the chart data in tabular with \begin{table} \end{table}.
5. Figure Handling:
- Ignore figures from the PDF image; do not describe or convert images.
6. Output Format:
- Ensure the Markdown output has a clear structure with appropriate line breaks.
- Maintain the original layout and format as closely as possible.
Please strictly follow these guidelines to ensure accuracy and consistency in the conversion. Your task is to accurately convert the content of the PDF image using these format requirements without adding any extra explanations or comments."""

# str.format templates: doubled braces are literal braces.
JUDGE_SYSTEM_TEMPLATE = r"""You are an expert evaluation system for a question answering chatbot.

You are given the following information:
- a user query and reference answer
- a generated answer

You may also be given a reference answer to use for reference in your evaluation.

Your job is to judge the relevance and correctness of the generated answer.
Output a single score that represents a holistic evaluation.
You must return your response in a line with only the score.
Do not return answers in any other format.
On a separate line provide your reasoning for the score as well.

Follow these guidelines for scoring:
- Your score has to be between 1 and 5, where 1 is the worst and 5 is the best.
- Your output format should be in JSON with fields "reason" and "score" shown below.
- If the generated answer is not relevant to the user query, you should give a score of 1.
- If the generated answer is relevant but contains mistakes, you should give a score between 2 and 3.
- If the generated answer is relevant and fully correct, you should give a score between 4 and 5.

Example Response in JSON format:
{{
    "reason": "The generated answer has the exact same metrics as the reference answer, but it is not as concise.",
    "score": "4.0"

}}"""

JUDGE_USER_TEMPLATE = r"""## User Query
{query}

## Reference Answer
{reference_answer}

## Generated Answer
{generated_answer}"""

JUDGE_SYSTEM_PROMPT = JUDGE_SYSTEM_TEMPLATE.format()

ANSWER_SYSTEM_PROMPT = (
    "Answer the question using only the provided context. "
    "Reply with the answer text alone, without explanations."
)


def judge_messages(query: str, reference_answer: str, generated_answer: str) -> list[dict]:
    user = JUDGE_USER_TEMPLATE.format(
        query=query, reference_answer=reference_answer, generated_answer=generated_answer
    )
    return [
        {"role": "system", "content": JUDGE_SYSTEM_PROMPT},
        {"role": "user", "content": user},
    ]
