"""Static blog builder.

Renders published articles into a self-contained site: reverse
chronological index, one page per article and per tag, an author page,
an RSS 2.0 feed and a plain-text sitemap. Pages come from internal
string templates with strict token substitution, all emitted markup is
XML-well-formed HTML5, and builds are byte-deterministic for fixed
inputs and timestamps.
"""

from __future__ import annotations

import hashlib
import html
import json
import re
import shutil
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from email.utils import format_datetime
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Sequence

from .assemble import AssembledArticle
from .corpus import Article
from .tagging import IdfTable, extract_tags

__all__ = [
    "SiteError",
    "SiteConfig",
    "PublishedArticle",
    "slugify",
    "parse_timestamp",
    "tag_published",
    "publish_article",
    "save_article",
    "load_articles",
    "build_site",
    "check_links",
    "placeholder_avatar",
]

MARKER = ".newsloom-site"

DEFAULT_THEME = {
    "background": "#faf9f6",
    "surface": "#ffffff",
    "text": "#1c1c1c",
    "muted": "#6b6b6b",
    "accent": "#8b1a1a",
    "rule": "#dcd8d0",
    "font_body": "Georgia, 'Times New Roman', serif",
    "font_head": "Helvetica, Arial, sans-serif",
}

_MONTHS = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)


class SiteError(Exception):
    """Bad site configuration, article set, or output directory."""


def slugify(text: str) -> str:
    """URL-safe lowercase slug; 'article' when nothing survives."""
    ascii_text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode()
    slug = re.sub(r"[^a-z0-9]+", "-", ascii_text.lower()).strip("-")
    return slug or "article"


def parse_timestamp(value: str) -> datetime:
    """ISO 8601 ('Z' allowed) to an aware UTC datetime."""
    try:
        dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise SiteError(f"bad timestamp {value!r}: {exc}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _human_date(dt: datetime) -> str:
    return f"{_MONTHS[dt.month - 1]} {dt.day}, {dt.year}"


@dataclass(frozen=True)
class SiteConfig:
    site_title: str
    base_url: str
    author_name: str
    author_bio: str = ""
    description: str = ""
    portrait_path: str | None = None
    theme: dict = field(default_factory=dict)
    output_dir: str = "site"

    def __post_init__(self) -> None:
        if not self.site_title:
            raise SiteError("site_title must be non-empty")
        if not self.base_url:
            raise SiteError("base_url must be non-empty")
        if not self.author_name:
            raise SiteError("author_name must be non-empty")
        unknown = set(self.theme) - set(DEFAULT_THEME)
        if unknown:
            raise SiteError(f"unknown theme tokens: {sorted(unknown)}")

    @property
    def url_root(self) -> str:
        return self.base_url.rstrip("/")

    def theme_tokens(self) -> dict:
        merged = dict(DEFAULT_THEME)
        merged.update(self.theme)
        return merged

    def to_json(self) -> dict:
        return {
            "site_title": self.site_title,
            "base_url": self.base_url,
            "author": {
                "name": self.author_name,
                "bio": self.author_bio,
                "portrait": self.portrait_path,
            },
            "description": self.description,
            "theme": dict(self.theme),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_json(cls, record: dict) -> "SiteConfig":
        if not isinstance(record, dict):
            raise SiteError("site config must be a JSON object")
        author = record.get("author", {})
        if not isinstance(author, dict):
            raise SiteError("site config 'author' must be an object")
        return cls(
            site_title=record.get("site_title", ""),
            base_url=record.get("base_url", ""),
            author_name=author.get("name", ""),
            author_bio=author.get("bio", ""),
            description=record.get("description", ""),
            portrait_path=author.get("portrait"),
            theme=record.get("theme", {}),
            output_dir=record.get("output_dir", "site"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SiteConfig":
        try:
            record = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SiteError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(record)


@dataclass(frozen=True)
class PublishedArticle:
    article: AssembledArticle
    slug: str
    published_at: str
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.slug or slugify(self.slug) != self.slug:
            raise SiteError(f"slug {self.slug!r} is not URL-safe")
        parse_timestamp(self.published_at)

    def to_json(self) -> dict:
        return {
            "slug": self.slug,
            "published_at": self.published_at,
            "tags": list(self.tags),
            "article": self.article.to_json(),
        }

    @classmethod
    def from_json(cls, record: dict) -> "PublishedArticle":
        return cls(
            article=AssembledArticle.from_json(record["article"]),
            slug=record["slug"],
            published_at=record["published_at"],
            tags=tuple(record["tags"]),
        )


def tag_published(article: AssembledArticle, corpus_idf: IdfTable, k: int = 8) -> list[str]:
    """Tags for a rendered article: TF-IDF extraction over its full text."""
    body = "\n\n".join([article.excerpt, *article.body_paragraphs])
    pseudo = Article(id=article.manifest_id, title=article.title, body=body)
    return extract_tags(pseudo, corpus_idf, k=k).names()


def publish_article(
    article: AssembledArticle, published_at: str, corpus_idf: IdfTable
) -> PublishedArticle:
    return PublishedArticle(
        article=article,
        slug=slugify(article.title),
        published_at=published_at,
        tags=tuple(tag_published(article, corpus_idf)),
    )


def save_article(published: PublishedArticle, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{published.slug}.json"
    path.write_text(
        json.dumps(published.to_json(), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    return path


def load_articles(directory: str | Path) -> list[PublishedArticle]:
    out = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            out.append(PublishedArticle.from_json(json.loads(path.read_text(encoding="utf-8"))))
        except (json.JSONDecodeError, KeyError) as exc:
            raise SiteError(f"{path}: bad article record: {exc}") from exc
    return out


def placeholder_avatar(name: str) -> str:
    """Deterministic geometric SVG avatar derived from the author name."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    hue = digest[0] * 360 // 256
    hue2 = (hue + 48) % 360
    initials = "".join(w[0].upper() for w in name.split()[:2]) or "?"
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" width="160" height="160" '
        'viewBox="0 0 160 160" role="img" aria-label="portrait placeholder">'
        f'<rect width="160" height="160" fill="hsl({hue}, 42%, 38%)"/>'
        f'<circle cx="{40 + digest[1] % 80}" cy="{36 + digest[2] % 40}" r="52" '
        f'fill="hsl({hue2}, 48%, 52%)" fill-opacity="0.55"/>'
        f'<circle cx="80" cy="64" r="26" fill="hsl({hue}, 30%, 88%)"/>'
        f'<path d="M 32 160 Q 80 96 128 160 Z" fill="hsl({hue}, 30%, 88%)"/>'
        f'<text x="80" y="150" font-family="Helvetica, Arial, sans-serif" '
        f'font-size="20" font-weight="bold" text-anchor="middle" '
        f'fill="hsl({hue}, 42%, 24%)">{html.escape(initials)}</text>'
        "</svg>\n"
    )


_TOKEN_RE = re.compile(r"\{\{(\w+)\}\}")


def _render(template: str, tokens: dict) -> str:
    """Substitute {{name}} markers; unknown or unused names are errors."""
    used = set()

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in tokens:
            raise SiteError(f"template references unknown token {name!r}")
        used.add(name)
        return tokens[name]

    out = _TOKEN_RE.sub(sub, template)
    unused = set(tokens) - used
    if unused:
        raise SiteError(f"unused template tokens: {sorted(unused)}")
    return out


_PAGE = """<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8"/>
<meta name="viewport" content="width=device-width, initial-scale=1"/>
<title>{{title}}</title>
<link rel="stylesheet" href="{{root}}style.css"/>
<link rel="alternate" type="application/rss+xml" title="{{site}}" href="{{root}}feed.xml"/>
</head>
<body>
<header class="masthead">
<p class="site-title"><a href="{{root}}index.html">{{site}}</a></p>
<nav><a href="{{root}}index.html">Latest</a><a href="{{root}}author.html">{{author}}</a></nav>
</header>
<main>
{{content}}
</main>
<footer>
<p>{{site}} &#183; <a href="{{root}}feed.xml">RSS</a></p>
</footer>
</body>
</html>
"""

_CARD = """<article class="card">
<h2><a href="{{root}}article/{{slug}}.html">{{title}}</a></h2>
<p class="meta">{{date}}{{tags}}</p>
<p class="excerpt">{{excerpt}}</p>
</article>
"""

_ARTICLE = """<article class="full">
<h1>{{title}}</h1>
<p class="meta">By <a href="{{root}}author.html">{{author}}</a> &#183; {{date}}</p>
{{figure}}<p class="excerpt">{{excerpt}}</p>
{{paragraphs}}{{tags}}</article>
"""

_STYLE = """:root {
  --background: {{background}};
  --surface: {{surface}};
  --text: {{text}};
  --muted: {{muted}};
  --accent: {{accent}};
  --rule: {{rule}};
}
* { box-sizing: border-box; }
body {
  margin: 0;
  background: var(--background);
  color: var(--text);
  font-family: {{font_body}};
  line-height: 1.6;
}
.masthead, main, footer { max-width: 44rem; margin: 0 auto; padding: 0 1rem; }
.masthead { border-bottom: 3px double var(--rule); padding-top: 1.5rem; }
.site-title { font-family: {{font_head}}; font-size: 1.8rem; font-weight: bold; margin: 0; }
.site-title a, h1 a, h2 a { color: var(--text); text-decoration: none; }
nav { margin: 0.5rem 0 1rem; }
nav a { color: var(--accent); margin-right: 1rem; text-decoration: none; font-family: {{font_head}}; }
h1, h2 { font-family: {{font_head}}; line-height: 1.2; }
.meta { color: var(--muted); font-size: 0.9rem; }
.meta a { color: var(--accent); }
.card { border-bottom: 1px solid var(--rule); padding: 1.2rem 0; }
.excerpt { font-style: italic; }
figure { margin: 1rem 0; }
figure img { max-width: 100%; height: auto; }
figcaption { color: var(--muted); font-size: 0.85rem; }
.tags a { color: var(--accent); margin-right: 0.6rem; text-decoration: none; }
.portrait { width: 10rem; height: 10rem; border-radius: 50%; }
footer { border-top: 3px double var(--rule); margin-top: 2rem; padding-top: 1rem;
  padding-bottom: 2rem; color: var(--muted); font-size: 0.9rem; }
"""


def _tag_slug_map(articles: Sequence[PublishedArticle]) -> dict[str, str]:
    """tag -> slug; collisions between distinct tags are errors."""
    by_slug: dict[str, str] = {}
    for art in articles:
        for tag in art.tags:
            slug = slugify(tag)
            other = by_slug.get(slug)
            if other is not None and other != tag:
                raise SiteError(f"tag slug collision: {other!r} and {tag!r} both map to {slug!r}")
            by_slug[slug] = tag
    return {tag: slug for slug, tag in by_slug.items()}


def _tag_links(tags: Iterable[str], slugs: dict[str, str], root: str) -> str:
    parts = [
        f'<a href="{root}tag/{slugs[t]}.html">{html.escape(t.replace("_", " "))}</a>'
        for t in tags
    ]
    return "".join(parts)


def _card(art: PublishedArticle, slugs: dict[str, str], root: str) -> str:
    dt = parse_timestamp(art.published_at)
    tag_html = _tag_links(art.tags, slugs, root)
    return _render(
        _CARD,
        {
            "root": root,
            "slug": art.slug,
            "title": html.escape(art.article.title),
            "date": html.escape(_human_date(dt)),
            "tags": f' &#183; <span class="tags">{tag_html}</span>' if tag_html else "",
            "excerpt": html.escape(art.article.excerpt),
        },
    )


def _article_page(art: PublishedArticle, slugs: dict[str, str], config: SiteConfig) -> str:
    root = "../"
    dt = parse_timestamp(art.published_at)
    a = art.article
    figure = ""
    if a.image is not None:
        figure = (
            f'<figure><img src="{html.escape(a.image.url, quote=True)}" '
            f'alt="{html.escape(a.image.work_title, quote=True)}"/>'
            f"<figcaption>{html.escape(a.image.credit_line())}</figcaption></figure>\n"
        )
    paragraphs = "".join(f"<p>{html.escape(p)}</p>\n" for p in a.body_paragraphs)
    tag_html = _tag_links(art.tags, slugs, root)
    tags = f'<p class="tags">Tags: {tag_html}</p>\n' if tag_html else ""
    return _render(
        _ARTICLE,
        {
            "root": root,
            "title": html.escape(a.title),
            "author": html.escape(config.author_name),
            "date": html.escape(_human_date(dt)),
            "figure": figure,
            "excerpt": html.escape(a.excerpt),
            "paragraphs": paragraphs,
            "tags": tags,
        },
    )


def _page(title: str, content: str, root: str, config: SiteConfig) -> str:
    return _render(
        _PAGE,
        {
            "title": html.escape(title),
            "site": html.escape(config.site_title),
            "author": html.escape(config.author_name),
            "root": root,
            "content": content.rstrip("\n"),
        },
    )


def _feed_xml(articles: Sequence[PublishedArticle], config: SiteConfig, now: datetime) -> str:
    rss = ET.Element("rss", version="2.0")
    channel = ET.SubElement(rss, "channel")
    ET.SubElement(channel, "title").text = config.site_title
    ET.SubElement(channel, "link").text = config.url_root + "/"
    ET.SubElement(channel, "description").text = config.description or config.site_title
    ET.SubElement(channel, "lastBuildDate").text = format_datetime(now)
    for art in articles:
        item = ET.SubElement(channel, "item")
        ET.SubElement(item, "title").text = art.article.title
        link = f"{config.url_root}/article/{art.slug}.html"
        ET.SubElement(item, "link").text = link
        guid = ET.SubElement(item, "guid", isPermaLink="true")
        guid.text = link
        ET.SubElement(item, "pubDate").text = format_datetime(parse_timestamp(art.published_at))
        ET.SubElement(item, "description").text = art.article.excerpt
        for tag in art.tags:
            ET.SubElement(item, "category").text = tag.replace("_", " ")
    ET.indent(rss)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(rss, encoding="unicode") + "\n"


def _prepare_output(out: Path) -> None:
    if out.exists():
        if any(out.iterdir()) and not (out / MARKER).exists():
            raise SiteError(
                f"output dir {out} is not empty and has no {MARKER} marker; refusing to clear it"
            )
        shutil.rmtree(out)
    for sub in ("", "article", "tag", "assets"):
        (out / sub).mkdir(parents=True, exist_ok=True)


def build_site(
    articles: Sequence[PublishedArticle],
    config: SiteConfig,
    now: str | None = None,
    output_dir: str | Path | None = None,
) -> Path:
    """Emit the whole site; returns the output directory.

    now is an ISO timestamp for the feed's build date; it defaults to the
    newest article timestamp (or the epoch with no articles) so builds
    never depend on the wall clock.
    """
    seen: dict[str, PublishedArticle] = {}
    for art in articles:
        if art.slug in seen:
            raise SiteError(
                f"slug collision: articles {seen[art.slug].article.manifest_id!r} "
                f"and {art.article.manifest_id!r} both want {art.slug!r}"
            )
        seen[art.slug] = art

    ordered = sorted(
        articles, key=lambda a: (-parse_timestamp(a.published_at).timestamp(), a.slug)
    )
    if now is not None:
        build_dt = parse_timestamp(now)
    elif ordered:
        build_dt = parse_timestamp(ordered[0].published_at)
    else:
        build_dt = datetime.fromtimestamp(0, tz=timezone.utc)
    slugs = _tag_slug_map(ordered)

    out = Path(output_dir) if output_dir is not None else Path(config.output_dir)
    _prepare_output(out)
    pages: dict[str, str] = {}

    cards = "".join(_card(a, slugs, "") for a in ordered)
    if not ordered:
        cards = "<p>No articles yet.</p>\n"
    pages["index.html"] = _page(
        config.site_title, f"<h1>Latest</h1>\n{cards}", "", config
    )

    for art in ordered:
        pages[f"article/{art.slug}.html"] = _page(
            f"{art.article.title} - {config.site_title}",
            _article_page(art, slugs, config),
            "../",
            config,
        )

    for tag, slug in sorted(slugs.items()):
        tagged = [a for a in ordered if tag in a.tags]
        tag_cards = "".join(_card(a, slugs, "../") for a in tagged)
        display = html.escape(tag.replace("_", " "))
        pages[f"tag/{slug}.html"] = _page(
            f"Tag: {tag.replace('_', ' ')} - {config.site_title}",
            f"<h1>Tag: {display}</h1>\n{tag_cards}",
            "../",
            config,
        )

    portrait_rel = "assets/avatar.svg"
    portrait_src = Path(config.portrait_path) if config.portrait_path else None
    if portrait_src is not None and portrait_src.exists():
        portrait_rel = f"assets/portrait{portrait_src.suffix.lower()}"
        (out / portrait_rel).write_bytes(portrait_src.read_bytes())
    else:
        (out / "assets/avatar.svg").write_text(
            placeholder_avatar(config.author_name), encoding="utf-8"
        )

    bio = "".join(
        f"<p>{html.escape(part)}</p>\n"
        for part in config.author_bio.split("\n\n")
        if part.strip()
    ) or "<p></p>\n"
    author_html = (
        f'<img class="portrait" src="{portrait_rel}" '
        f'alt="{html.escape(config.author_name, quote=True)}"/>\n'
        f"<h1>{html.escape(config.author_name)}</h1>\n{bio}"
    )
    pages["author.html"] = _page(
        f"{config.author_name} - {config.site_title}", author_html, "", config
    )

    pages["style.css"] = _render(_STYLE, config.theme_tokens())
    pages["feed.xml"] = _feed_xml(ordered, config, build_dt)
    urls = [f"{config.url_root}/index.html", f"{config.url_root}/author.html"]
    urls += [f"{config.url_root}/article/{a.slug}.html" for a in ordered]
    urls += [f"{config.url_root}/tag/{s}.html" for s in sorted(slugs.values())]
    pages["sitemap.txt"] = "\n".join(sorted(urls)) + "\n"

    for rel, text in sorted(pages.items()):
        (out / rel).write_text(text, encoding="utf-8")
    (out / MARKER).write_text("generated static site\n", encoding="utf-8")
    return out


class _RefCollector(HTMLParser):
    def __init__(self):
        super().__init__()
        self.refs: list[str] = []

    def handle_starttag(self, tag, attrs):
        for name, value in attrs:
            if name in ("href", "src") and value:
                self.refs.append(value)


_EXTERNAL = ("http://", "https://", "mailto:", "data:", "tel:", "//")


def check_links(output_dir: str | Path) -> list[str]:
    """Internal link-closure check; returns problems (empty when closed)."""
    out = Path(output_dir)
    problems: list[str] = []
    for page in sorted(out.rglob("*.html")):
        collector = _RefCollector()
        collector.feed(page.read_text(encoding="utf-8"))
        for ref in collector.refs:
            if ref.startswith(_EXTERNAL) or ref.startswith("#"):
                continue
            target = (page.parent / ref.split("#")[0]).resolve()
            if not target.is_file():
                problems.append(f"{page.relative_to(out)}: broken link {ref!r}")
            elif out.resolve() not in target.parents and target != out.resolve():
                problems.append(f"{page.relative_to(out)}: link escapes site {ref!r}")
    return problems
