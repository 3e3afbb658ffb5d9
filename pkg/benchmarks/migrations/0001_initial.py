# Generated by Django 5.0.1 on 2026-10-18 10:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='BenchmarkRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('name', models.CharField(max_length=200)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('partial', 'Completed with failed points'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('master_seed', models.PositiveBigIntegerField(default=0)),
                ('config', models.JSONField()),
                ('report', models.JSONField(blank=True, default=dict)),
                ('failed_points', models.PositiveIntegerField(default=0)),
                ('error_message', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['name', 'created_at'], name='benchmarks__name_5c1e0a_idx'), models.Index(fields=['status'], name='benchmarks__status_9b2f41_idx')],
            },
        ),
    ]
