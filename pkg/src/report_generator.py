from docx import Document
from docx.enum.table import WD_TABLE_ALIGNMENT
from docx.enum.text import WD_ALIGN_PARAGRAPH
from docx.shared import Pt

from src.config import TABLE_DECIMALS

_COLUMNS = [
    ("distribution", "Распределение"),
    ("lambda", "λ"),
    ("param", "δ / p"),
    ("C", "C"),
    ("M", "M"),
    ("N", "N"),
    ("sim", "Симуляция"),
    ("conf", "± дов. инт."),
    ("limit", "N → ∞"),
    ("rel_err_pct", "Отн. ошибка, %"),
]


def _fmt(value):
    if value is None or value == "":
        return "-"
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        if value != value:
            return "-"
        return f"{value:.{TABLE_DECIMALS}f}"
    return str(value)


def create_table_report(df, meta):
    """
    Формирует DOCX-отчет по воспроизведенной таблице.

    Args:
        df (pandas.DataFrame): Строки таблицы (колонки как у cmd_table)
        meta (dict): title, policy, scale, runs, seed

    Returns:
        docx.Document
    """
    doc = Document()

    style = doc.styles['Normal']
    style.font.name = 'Times New Roman'
    style.font.size = Pt(12)
    style.paragraph_format.alignment = WD_ALIGN_PARAGRAPH.JUSTIFY

    h1_style = doc.styles['Heading 1']
    h1_style.font.name = 'Times New Roman'
    h1_style.font.size = Pt(14)
    h1_style.font.bold = True
    h1_style.font.color.rgb = None

    def add_p(text, bold=False):
        p = doc.add_paragraph(text)
        p.alignment = WD_ALIGN_PARAGRAPH.JUSTIFY
        if bold:
            p.runs[0].bold = True
        return p

    title = doc.add_heading('ОТЧЕТ', 0)
    title.alignment = WD_ALIGN_PARAGRAPH.CENTER
    for run in title.runs:
        run.font.name = 'Times New Roman'
        run.font.size = Pt(16)
        run.font.color.rgb = None

    sub = doc.add_paragraph(meta.get('title', 'Сравнение симуляции с пределом N → ∞'))
    sub.alignment = WD_ALIGN_PARAGRAPH.CENTER

    doc.add_heading('1. Параметры расчета', level=1)
    add_p(f"Политика: {meta.get('policy', '-')}")
    add_p(f"Масштаб: {meta.get('scale', '-')}")
    add_p(f"Число прогонов: {meta.get('runs', '-')}, начальное зерно: {meta.get('seed', '-')}")
    add_p(
        "Доверительные интервалы 95% построены по средним прогонов (распределение Стьюдента). "
        "Относительная ошибка считается относительно решения очереди в полости."
    )

    doc.add_heading('2. Результаты', level=1)
    columns = [(key, header) for key, header in _COLUMNS if key in df.columns]
    table = doc.add_table(rows=1, cols=len(columns))
    table.style = 'Table Grid'
    table.alignment = WD_TABLE_ALIGNMENT.CENTER
    for cell, (_, header) in zip(table.rows[0].cells, columns):
        cell.text = header
        cell.paragraphs[0].runs[0].bold = True
    for record in df.to_dict('records'):
        cells = table.add_row().cells
        for cell, (key, _) in zip(cells, columns):
            cell.text = _fmt(record.get(key))

    skipped = int((df.get('sim') == 'skipped').sum()) if 'sim' in df.columns else 0
    if skipped:
        doc.add_heading('3. Примечание', level=1)
        add_p(f"Строк без симуляции: {skipped} (масштаб desk ограничивает N значением 10⁴).", bold=True)

    return doc
